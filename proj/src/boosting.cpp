#include "wellml/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace wellml {

void GbmParams::validate() const {
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw std::invalid_argument("gbm: learning_rate must lie in (0, 1]");
    if (max_depth < 1) throw std::invalid_argument("gbm: max_depth must be >= 1");
    if (!(subsample > 0.0 && subsample <= 1.0)) throw std::invalid_argument("gbm: subsample must lie in (0, 1]");
    if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) {
        throw std::invalid_argument("gbm: colsample_bytree must lie in (0, 1]");
    }
    if (!(min_child_weight >= 0.0)) throw std::invalid_argument("gbm: min_child_weight must be >= 0");
    if (!(gamma >= 0.0) || !(reg_alpha >= 0.0) || !(reg_lambda >= 0.0)) {
        throw std::invalid_argument("gbm: gamma, reg_alpha and reg_lambda must be >= 0");
    }
}

double split_gain(double GL, double HL, double GR, double HR, const GbmParams& p) {
    const double lambda = p.reg_lambda;
    const double G = GL + GR;
    return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (HL + HR + lambda)) - p.gamma;
}

bool split_admitted(double GL, double HL, double GR, double HR, const GbmParams& p) {
    return split_gain(GL, HL, GR, HR, p) > 0.0 && std::min(HL, HR) >= p.min_child_weight;
}

double leaf_weight(double G, double H, const GbmParams& p) {
    const double shrunk = std::max(0.0, std::abs(G) - p.reg_alpha);
    if (shrunk == 0.0) return 0.0;
    return (G > 0.0 ? -shrunk : shrunk) / (H + p.reg_lambda);
}

namespace {

class GainTreeGrower {
public:
    GainTreeGrower(const Matrix& X, std::span<const double> grad, std::span<const double> hess,
                   std::span<const std::size_t> columns, const GbmParams& params)
        : X_(X), grad_(grad), hess_(hess), columns_(columns), params_(params) {}

    std::vector<TreeNode> grow(std::vector<std::size_t> rows) {
        build(std::move(rows), 0);
        return std::move(nodes_);
    }

private:
    struct Best {
        double gain = -std::numeric_limits<double>::infinity();
        std::size_t feature = 0;
        double threshold = 0.0;
        bool found = false;
    };

    std::size_t build(std::vector<std::size_t> rows, std::size_t depth) {
        double G = 0.0, H = 0.0;
        for (auto r : rows) {
            G += grad_[r];
            H += hess_[r];
        }
        Best best;
        if (depth < params_.max_depth && rows.size() >= 2) best = find_split(rows, G, H);
        if (!best.found) {
            TreeNode leaf;
            leaf.value = leaf_weight(G, H, params_);
            leaf.count = rows.size();
            nodes_.push_back(leaf);
            return nodes_.size() - 1;
        }

        std::vector<std::size_t> left, right;
        for (auto r : rows) (X_(r, best.feature) <= best.threshold ? left : right).push_back(r);
        const std::size_t self = nodes_.size();
        TreeNode node;
        node.feature = static_cast<std::int32_t>(best.feature);
        node.threshold = best.threshold;
        node.count = rows.size();
        nodes_.push_back(node);
        rows.clear();
        rows.shrink_to_fit();
        const std::size_t l = build(std::move(left), depth + 1);
        const std::size_t r = build(std::move(right), depth + 1);
        nodes_[self].left = static_cast<std::int32_t>(l);
        nodes_[self].right = static_cast<std::int32_t>(r);
        return self;
    }

    Best find_split(std::span<const std::size_t> rows, double G, double H) {
        const std::size_t n = rows.size();
        Best best;
        struct Entry {
            double x, g, h;
        };
        std::vector<Entry> sorted(n);
        for (auto f : columns_) {
            for (std::size_t i = 0; i < n; ++i) sorted[i] = {X_(rows[i], f), grad_[rows[i]], hess_[rows[i]]};
            std::sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
                return a.x < b.x || (a.x == b.x && a.g < b.g);
            });
            if (sorted.front().x == sorted.back().x) continue;
            double GL = 0.0, HL = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                GL += sorted[i].g;
                HL += sorted[i].h;
                if (sorted[i].x == sorted[i + 1].x) continue;
                const double GR = G - GL;
                const double HR = H - HL;
                if (std::min(HL, HR) < params_.min_child_weight) continue;
                const double gain = split_gain(GL, HL, GR, HR, params_);
                if (gain > 0.0 && gain > best.gain) {
                    best.gain = gain;
                    best.feature = f;
                    best.threshold = split_threshold(sorted[i].x, sorted[i + 1].x);
                    best.found = true;
                }
            }
        }
        return best;
    }

    const Matrix& X_;
    std::span<const double> grad_;
    std::span<const double> hess_;
    std::span<const std::size_t> columns_;
    const GbmParams& params_;
    std::vector<TreeNode> nodes_;
};

double mse(std::span<const double> pred, std::span<const double> y) {
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ss += (pred[i] - y[i]) * (pred[i] - y[i]);
    return ss / static_cast<double>(y.size());
}

}  // namespace

GbmEnsemble fit_gbm(const Matrix& X, std::span<const double> y, const GbmParams& params) {
    params.validate();
    const std::size_t n = X.rows();
    const std::size_t d = X.cols();
    if (n != y.size()) throw std::invalid_argument("gbm: X and y row counts differ");
    if (n < 2 || d == 0) throw std::invalid_argument("gbm: need at least two rows and one feature");
    for (double v : y) {
        if (!std::isfinite(v)) throw std::invalid_argument("gbm: non-finite target");
    }

    GbmEnsemble model;
    model.learning_rate = params.learning_rate;
    model.n_features = d;
    model.base_value = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    const auto n_rows = static_cast<std::size_t>(std::ceil(params.subsample * static_cast<double>(n) - 1e-9));
    const auto n_cols = static_cast<std::size_t>(std::ceil(params.colsample_bytree * static_cast<double>(d) - 1e-9));

    std::vector<double> pred(n, model.base_value);
    std::vector<double> grad(n);
    const std::vector<double> hess(n, 1.0);
    model.stages.reserve(params.n_estimators);
    for (std::size_t stage = 0; stage < params.n_estimators; ++stage) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];

        GbmStage record;
        record.seed = derive_seed(params.seed, stage);
        Rng rng(record.seed);
        auto rows = rng.sample_without_replacement(n, std::max<std::size_t>(1, n_rows));
        std::sort(rows.begin(), rows.end());
        record.columns = rng.sample_without_replacement(d, std::max<std::size_t>(1, n_cols));
        std::sort(record.columns.begin(), record.columns.end());
        record.rows_sampled = rows.size();

        GainTreeGrower grower(X, grad, hess, record.columns, params);
        record.tree = RegressionTree(d, grower.grow(std::move(rows)));

        for (std::size_t i = 0; i < n; ++i) pred[i] += params.learning_rate * record.tree.predict(X.row(i));
        model.train_mse.push_back(mse(pred, y));
        model.stages.push_back(std::move(record));
    }
    return model;
}

double predict_gbm(const GbmEnsemble& model, std::span<const double> x) {
    if (x.size() != model.n_features) {
        throw std::invalid_argument("gbm: expected " + std::to_string(model.n_features) + " features, got " +
                                    std::to_string(x.size()));
    }
    double sum = 0.0;
    for (const auto& stage : model.stages) sum += stage.tree.predict(x);
    return model.base_value + model.learning_rate * sum;
}

std::vector<double> predict_gbm(const GbmEnsemble& model, const Matrix& X) {
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_gbm(model, X.row(i));
    return out;
}

nlohmann::json gbm_to_json(const GbmEnsemble& model) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : model.stages) {
        stages.push_back({{"seed", s.seed}, {"columns", s.columns}, {"rows_sampled", s.rows_sampled},
                          {"tree", tree_to_json(s.tree)}});
    }
    return {{"format", "wellml.gbm"},
            {"version", 1},
            {"base_value", model.base_value},
            {"learning_rate", model.learning_rate},
            {"n_features", model.n_features},
            {"train_mse", model.train_mse},
            {"stages", std::move(stages)}};
}

GbmEnsemble gbm_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "wellml.gbm" || doc.value("version", 0) != 1) {
        throw std::runtime_error("gbm json: unsupported format or version");
    }
    GbmEnsemble model;
    model.base_value = doc.at("base_value").get<double>();
    model.learning_rate = doc.at("learning_rate").get<double>();
    model.n_features = doc.at("n_features").get<std::size_t>();
    model.train_mse = doc.value("train_mse", std::vector<double>{});
    for (const auto& s : doc.at("stages")) {
        GbmStage stage;
        stage.seed = s.at("seed").get<std::uint64_t>();
        stage.columns = s.at("columns").get<std::vector<std::size_t>>();
        stage.rows_sampled = s.at("rows_sampled").get<std::size_t>();
        stage.tree = tree_from_json(s.at("tree"));
        model.stages.push_back(std::move(stage));
    }
    return model;
}

}  // namespace wellml
