#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "wellml/cart.hpp"

namespace wellml {

/// Squared-error gradient boosting with second-order split gain and L1/L2
/// regularized leaf weights.
struct GbmParams {
    double learning_rate = 0.1;
    std::size_t n_estimators = 100;
    std::size_t max_depth = 6;
    double subsample = 1.0;
    double colsample_bytree = 1.0;
    double min_child_weight = 1.0;
    double gamma = 0.0;
    double reg_alpha = 0.0;
    double reg_lambda = 1.0;
    std::uint64_t seed = 121;

    void validate() const;
};

struct GbmStage {
    std::uint64_t seed = 0;
    std::vector<std::size_t> columns;  // features eligible for splits
    std::size_t rows_sampled = 0;
    RegressionTree tree;               // leaf values are the raw weights w
};

struct GbmEnsemble {
    double base_value = 0.0;
    double learning_rate = 0.1;
    std::size_t n_features = 0;
    std::vector<GbmStage> stages;
    /// Training MSE after each stage, from the in-training predictions.
    std::vector<double> train_mse;
};

/// Split score: 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - (GL+GR)^2/(HL+HR+l)] - gamma.
double split_gain(double GL, double HL, double GR, double HR, const GbmParams& params);

/// A split is admitted only when gain > 0 and both children carry at least
/// min_child_weight hessian.
bool split_admitted(double GL, double HL, double GR, double HR, const GbmParams& params);

/// -sign(G) max(0, |G| - alpha) / (H + lambda).
double leaf_weight(double G, double H, const GbmParams& params);

GbmEnsemble fit_gbm(const Matrix& X, std::span<const double> y, const GbmParams& params);

double predict_gbm(const GbmEnsemble& model, std::span<const double> x);
std::vector<double> predict_gbm(const GbmEnsemble& model, const Matrix& X);

nlohmann::json gbm_to_json(const GbmEnsemble& model);
GbmEnsemble gbm_from_json(const nlohmann::json& doc);

}  // namespace wellml
