#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wellml/matrix.hpp"
#include "wellml/preprocess.hpp"

namespace wellml {

struct MetricsReport {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    /// Coefficient of determination 1 - SSres/SStot; empty when y_true has
    /// zero variance.
    std::optional<double> r2;
    /// Squared Pearson correlation of (y_true, y_pred), for comparison.
    std::optional<double> pearson_r2;
    std::size_t n = 0;
    std::string units;
};

MetricsReport metrics(std::span<const double> y_true, std::span<const double> y_pred, std::string units = {});

/// Two-sided standard-normal quantile z such that P(|Z| <= z) = level.
double two_sided_z(double level);

/// Normal-approximation CI of the mean: mean +- z s / sqrt(n), s the sample std.
std::pair<double, double> confidence_interval(std::span<const double> samples, double level = 0.95);

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::size_t count = 0;
};

/// Sturges rule: ceil(log2 n) + 1 equal-width bins over [min, max]; the last
/// bin is closed on the right. A zero-width range is widened to [c-0.5, c+0.5].
std::vector<HistogramBin> sturges_histogram(std::span<const double> samples);

struct UncertaintyReport {
    std::vector<double> rmses;
    std::size_t n_realizations = 0;  // requested
    std::size_t n_failed = 0;
    double mean = 0.0;
    double std = 0.0;                // sample std
    double ci_level = 0.95;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::vector<HistogramBin> bins;
};

/// Fits on (X_train, y_train) with the given seed and predicts X_test.
using Trainer = std::function<std::vector<double>(const Matrix& X_train, std::span<const double> y_train,
                                                  const Matrix& X_test, std::uint64_t seed)>;

struct RealizationOptions {
    std::size_t n_realizations = 100;
    std::uint64_t master_seed = 121;
    /// Fractions of the re-split; the last part is the test set.
    SplitSpec split;
    /// When false every realization reuses split.seed and only the model seed
    /// varies.
    bool vary_split = true;
    double level = 0.95;
    std::size_t workers = 1;
};

/// Realization r re-splits and re-fits with seed derive_seed(master_seed, r)
/// and records the test RMSE. Failed realizations are excluded and counted;
/// more than 10% failures is an error.
UncertaintyReport realizations(const Trainer& trainer, const Matrix& X, std::span<const double> y,
                               const RealizationOptions& options);

/// Test RMSE of one realization; `realizations` is a loop over this.
double realization_rmse(const Trainer& trainer, const Matrix& X, std::span<const double> y,
                        const RealizationOptions& options, std::size_t index);

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const UncertaintyReport& report);

}  // namespace wellml
