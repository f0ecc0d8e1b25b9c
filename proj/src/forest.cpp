#include "wellml/forest.hpp"

#include <numeric>
#include <stdexcept>

#include "wellml/parallel.hpp"

namespace wellml {

std::vector<std::size_t> bootstrap_sample(std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("bootstrap_sample: n must be >= 1");
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = rng.index(n);
    return rows;
}

std::size_t default_forest_subset(std::size_t n_features) { return std::max<std::size_t>(1, n_features / 3); }

Forest fit_forest(const Matrix& X, std::span<const double> y, const RfParams& params, std::size_t workers) {
    if (params.n_estimators < 1) throw std::invalid_argument("forest: n_estimators must be >= 1");
    if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("forest: empty input");
    TreeParams tree_params = params.tree;
    if (!tree_params.feature_subset_size) tree_params.feature_subset_size = default_forest_subset(X.cols());
    tree_params.validate(X.cols());

    Forest forest;
    forest.trees.resize(params.n_estimators);
    forest.seeds.resize(params.n_estimators);
    parallel_for(params.n_estimators, workers, [&](std::size_t b) {
        const std::uint64_t seed = derive_seed(params.seed, b);
        Rng rng(seed);
        std::vector<std::size_t> rows;
        if (params.bootstrap) {
            rows = bootstrap_sample(X.rows(), rng);
        } else {
            rows.resize(X.rows());
            std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees[b] = fit_tree(X, y, rows, tree_params, rng);
        forest.seeds[b] = seed;
    });
    return forest;
}

double predict_forest(const Forest& forest, std::span<const double> x) {
    if (forest.trees.empty()) throw std::invalid_argument("forest: no trees");
    double sum = 0.0;
    for (const auto& tree : forest.trees) sum += tree.predict(x);
    return sum / static_cast<double>(forest.trees.size());
}

std::vector<double> predict_forest(const Forest& forest, const Matrix& X) {
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_forest(forest, X.row(i));
    return out;
}

nlohmann::json forest_to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : forest.trees) trees.push_back(tree_to_json(t));
    return {{"format", "wellml.forest"},
            {"version", 1},
            {"n_estimators", forest.trees.size()},
            {"seeds", forest.seeds},
            {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "wellml.forest" || doc.value("version", 0) != 1) {
        throw std::runtime_error("forest json: unsupported format or version");
    }
    Forest forest;
    forest.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& t : doc.at("trees")) forest.trees.push_back(tree_from_json(t));
    if (forest.trees.size() != forest.seeds.size() || forest.trees.empty()) {
        throw std::runtime_error("forest json: tree and seed counts differ");
    }
    return forest;
}

}  // namespace wellml
