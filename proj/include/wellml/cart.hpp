#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "wellml/matrix.hpp"
#include "wellml/rng.hpp"

namespace wellml {

inline constexpr std::size_t kUnlimitedDepth = std::numeric_limits<std::size_t>::max();

struct TreeParams {
    std::size_t max_depth = kUnlimitedDepth;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    /// Features drawn per node; empty means all features.
    std::optional<std::size_t> feature_subset_size;

    void validate(std::size_t n_features) const;
};

/// Internal nodes route x[feature] <= threshold to `left`. Leaves carry the
/// prediction and the number of training rows that reached them.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;
    std::size_t count = 0;

    bool is_leaf() const noexcept { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
public:
    RegressionTree() = default;
    RegressionTree(std::size_t n_features, std::vector<TreeNode> nodes);

    std::size_t n_features() const noexcept { return n_features_; }
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t depth() const;
    std::size_t leaf_count() const;

    /// Index of the leaf that `x` routes to.
    std::size_t leaf_index(std::span<const double> x) const;
    double predict(std::span<const double> x) const;

    bool operator==(const RegressionTree&) const = default;

private:
    std::size_t n_features_ = 0;
    std::vector<TreeNode> nodes_;
};

/// Fits a variance-reduction tree on the rows listed in `rows` (duplicates
/// allowed, as produced by bootstrap sampling).
RegressionTree fit_tree(const Matrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                        const TreeParams& params, Rng& rng);
RegressionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params, Rng& rng);

double predict_tree(const RegressionTree& tree, std::span<const double> x);

/// Midpoint between consecutive distinct sorted values a < b, nudged down to
/// `a` if rounding would place it on `b`.
double split_threshold(double a, double b);

nlohmann::json tree_to_json(const RegressionTree& tree);
RegressionTree tree_from_json(const nlohmann::json& doc);

}  // namespace wellml
