#include "wellml/cart.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace wellml {

void TreeParams::validate(std::size_t n_features) const {
    if (max_depth < 1) throw std::invalid_argument("tree: max_depth must be >= 1");
    if (min_samples_split < 2) throw std::invalid_argument("tree: min_samples_split must be >= 2");
    if (min_samples_leaf < 1) throw std::invalid_argument("tree: min_samples_leaf must be >= 1");
    if (feature_subset_size && (*feature_subset_size < 1 || *feature_subset_size > n_features)) {
        throw std::invalid_argument("tree: feature_subset_size must lie in [1, " + std::to_string(n_features) + "]");
    }
}

RegressionTree::RegressionTree(std::size_t n_features, std::vector<TreeNode> nodes)
    : n_features_(n_features), nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("tree: no nodes");
    const auto n = static_cast<std::int32_t>(nodes_.size());
    for (const auto& node : nodes_) {
        if (node.is_leaf()) continue;
        if (node.feature >= static_cast<std::int32_t>(n_features_) || node.left <= 0 || node.right <= 0 ||
            node.left >= n || node.right >= n) {
            throw std::invalid_argument("tree: malformed internal node");
        }
    }
}

std::size_t RegressionTree::depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [idx, d] = stack.back();
        stack.pop_back();
        const TreeNode& node = nodes_[idx];
        if (node.is_leaf()) {
            best = std::max(best, d);
        } else {
            stack.emplace_back(static_cast<std::size_t>(node.left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(node.right), d + 1);
        }
    }
    return best;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t RegressionTree::leaf_index(std::span<const double> x) const {
    if (x.size() != n_features_) {
        throw std::invalid_argument("tree: expected " + std::to_string(n_features_) + " features, got " +
                                    std::to_string(x.size()));
    }
    std::size_t idx = 0;
    while (!nodes_[idx].is_leaf()) {
        const TreeNode& node = nodes_[idx];
        idx = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                    : node.right);
    }
    return idx;
}

double RegressionTree::predict(std::span<const double> x) const { return nodes_[leaf_index(x)].value; }

double predict_tree(const RegressionTree& tree, std::span<const double> x) { return tree.predict(x); }

double split_threshold(double a, double b) {
    const double mid = std::isfinite(b - a) ? a + (b - a) * 0.5 : a * 0.5 + b * 0.5;
    return mid < b ? mid : a;
}

namespace {

struct SplitChoice {
    std::size_t feature = 0;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();
    bool found = false;
};

class TreeGrower {
public:
    TreeGrower(const Matrix& X, std::span<const double> y, const TreeParams& params, Rng& rng)
        : X_(X), y_(y), params_(params), rng_(rng) {}

    std::vector<TreeNode> grow(std::vector<std::size_t> rows) {
        build(std::move(rows), 0);
        return std::move(nodes_);
    }

private:
    std::size_t make_leaf(std::span<const std::size_t> rows) {
        double sum = 0.0;
        for (auto r : rows) sum += y_[r];
        TreeNode leaf;
        leaf.value = sum / static_cast<double>(rows.size());
        leaf.count = rows.size();
        nodes_.push_back(leaf);
        return nodes_.size() - 1;
    }

    std::size_t build(std::vector<std::size_t> rows, std::size_t depth) {
        const std::size_t n = rows.size();
        const bool constant = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return y_[r] == y_[rows[0]]; });
        if (depth >= params_.max_depth || n < params_.min_samples_split ||
            n < 2 * params_.min_samples_leaf || constant) {
            return make_leaf(rows);
        }

        const SplitChoice best = find_split(rows);
        if (!best.found) return make_leaf(rows);

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            (X_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        }
        const std::size_t self = nodes_.size();
        TreeNode node;
        node.feature = static_cast<std::int32_t>(best.feature);
        node.threshold = best.threshold;
        node.count = n;
        nodes_.push_back(node);
        rows.clear();
        rows.shrink_to_fit();
        const std::size_t l = build(std::move(left), depth + 1);
        const std::size_t r = build(std::move(right), depth + 1);
        nodes_[self].left = static_cast<std::int32_t>(l);
        nodes_[self].right = static_cast<std::int32_t>(r);
        return self;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t d = X_.cols();
        if (!params_.feature_subset_size || *params_.feature_subset_size >= d) {
            std::vector<std::size_t> all(d);
            std::iota(all.begin(), all.end(), 0);
            return all;
        }
        auto subset = rng_.sample_without_replacement(d, *params_.feature_subset_size);
        std::sort(subset.begin(), subset.end());
        return subset;
    }

    // Minimizing the children's summed squared error is equivalent to
    // maximizing SL^2/nL + SR^2/nR on node-centered targets.
    SplitChoice find_split(std::span<const std::size_t> rows) {
        const std::size_t n = rows.size();
        double mean = 0.0;
        for (auto r : rows) mean += y_[r];
        mean /= static_cast<double>(n);

        SplitChoice best;
        std::vector<std::pair<double, double>> sorted(n);
        for (auto f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) sorted[i] = {X_(rows[i], f), y_[rows[i]] - mean};
            std::sort(sorted.begin(), sorted.end());
            if (sorted.front().first == sorted.back().first) continue;

            double total = 0.0;
            for (const auto& p : sorted) total += p.second;
            double left_sum = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_sum += sorted[i].second;
                if (sorted[i].first == sorted[i + 1].first) continue;
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                if (nl < params_.min_samples_leaf || nr < params_.min_samples_leaf) continue;
                const double right_sum = total - left_sum;
                const double score = left_sum * left_sum / static_cast<double>(nl) +
                                     right_sum * right_sum / static_cast<double>(nr);
                if (score > best.score) {
                    best.score = score;
                    best.feature = f;
                    best.threshold = split_threshold(sorted[i].first, sorted[i + 1].first);
                    best.found = true;
                }
            }
        }
        return best;
    }

    const Matrix& X_;
    std::span<const double> y_;
    const TreeParams& params_;
    Rng& rng_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

RegressionTree fit_tree(const Matrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                        const TreeParams& params, Rng& rng) {
    if (X.rows() != y.size()) throw std::invalid_argument("fit_tree: X and y row counts differ");
    if (rows.empty() || X.cols() == 0) throw std::invalid_argument("fit_tree: empty input");
    params.validate(X.cols());
    for (auto r : rows) {
        if (r >= X.rows()) throw std::out_of_range("fit_tree: row index out of range");
    }
    TreeGrower grower(X, y, params, rng);
    return RegressionTree(X.cols(), grower.grow({rows.begin(), rows.end()}));
}

RegressionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params, Rng& rng) {
    std::vector<std::size_t> rows(X.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return fit_tree(X, y, rows, params, rng);
}

nlohmann::json tree_to_json(const RegressionTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : tree.nodes()) {
        if (node.is_leaf()) {
            nodes.push_back({{"value", node.value}, {"count", node.count}});
        } else {
            nodes.push_back({{"feature", node.feature},
                             {"threshold", node.threshold},
                             {"left", node.left},
                             {"right", node.right},
                             {"count", node.count}});
        }
    }
    return {{"format", "wellml.tree"}, {"version", 1}, {"n_features", tree.n_features()}, {"nodes", std::move(nodes)}};
}

RegressionTree tree_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "wellml.tree" || doc.value("version", 0) != 1) {
        throw std::runtime_error("tree json: unsupported format or version");
    }
    std::vector<TreeNode> nodes;
    for (const auto& j : doc.at("nodes")) {
        TreeNode node;
        node.count = j.at("count").get<std::size_t>();
        if (j.contains("feature")) {
            node.feature = j.at("feature").get<std::int32_t>();
            node.threshold = j.at("threshold").get<double>();
            node.left = j.at("left").get<std::int32_t>();
            node.right = j.at("right").get<std::int32_t>();
        } else {
            node.value = j.at("value").get<double>();
        }
        nodes.push_back(node);
    }
    return RegressionTree(doc.at("n_features").get<std::size_t>(), std::move(nodes));
}

}  // namespace wellml
