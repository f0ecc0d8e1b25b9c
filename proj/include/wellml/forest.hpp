#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "wellml/cart.hpp"

namespace wellml {

struct RfParams {
    std::size_t n_estimators = 100;
    TreeParams tree;
    std::uint64_t seed = 121;
    /// When false every tree sees the training rows once, in order. Test hook
    /// for the single-tree degenerate case.
    bool bootstrap = true;
};

/// Trees of a fitted forest plus the stream seed each one was grown from.
struct Forest {
    std::vector<RegressionTree> trees;
    std::vector<std::uint64_t> seeds;

    std::size_t n_features() const { return trees.empty() ? 0 : trees.front().n_features(); }
};

/// n draws with replacement from [0, n).
std::vector<std::size_t> bootstrap_sample(std::size_t n, Rng& rng);

/// Default per-node feature draw for regression forests: max(1, floor(d/3)).
std::size_t default_forest_subset(std::size_t n_features);

/// Tree b is grown from stream derive_seed(seed, b): first the bootstrap rows,
/// then the per-node feature draws. The result does not depend on `workers`.
Forest fit_forest(const Matrix& X, std::span<const double> y, const RfParams& params, std::size_t workers = 1);

double predict_forest(const Forest& forest, std::span<const double> x);
std::vector<double> predict_forest(const Forest& forest, const Matrix& X);

nlohmann::json forest_to_json(const Forest& forest);
Forest forest_from_json(const nlohmann::json& doc);

}  // namespace wellml
