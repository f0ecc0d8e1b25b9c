#include "wellml/evalkit.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wellml/parallel.hpp"
#include "wellml/rng.hpp"

namespace wellml {

MetricsReport metrics(std::span<const double> y_true, std::span<const double> y_pred, std::string units) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("metrics: length mismatch");
    if (y_true.empty()) throw std::invalid_argument("metrics: empty input");
    const std::size_t n = y_true.size();
    const double nd = static_cast<double>(n);
    double ss_res = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(y_true[i]) || !std::isfinite(y_pred[i])) {
            throw std::invalid_argument("metrics: non-finite entry");
        }
        const double e = y_true[i] - y_pred[i];
        ss_res += e * e;
        abs_sum += std::abs(e);
    }
    MetricsReport m;
    m.n = n;
    m.units = std::move(units);
    m.mse = ss_res / nd;
    m.rmse = std::sqrt(m.mse);
    m.mae = abs_sum / nd;

    const double mean_t = std::accumulate(y_true.begin(), y_true.end(), 0.0) / nd;
    const double mean_p = std::accumulate(y_pred.begin(), y_pred.end(), 0.0) / nd;
    double ss_tot = 0.0, ss_pred = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ss_tot += (y_true[i] - mean_t) * (y_true[i] - mean_t);
        ss_pred += (y_pred[i] - mean_p) * (y_pred[i] - mean_p);
        cross += (y_true[i] - mean_t) * (y_pred[i] - mean_p);
    }
    if (ss_tot > 0.0) {
        m.r2 = 1.0 - ss_res / ss_tot;
        if (ss_pred > 0.0) m.pearson_r2 = cross * cross / (ss_tot * ss_pred);
    }
    return m;
}

double two_sided_z(double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

std::pair<double, double> confidence_interval(std::span<const double> samples, double level) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("confidence_interval: need at least two samples");
    if (std::all_of(samples.begin(), samples.end(), [&](double v) { return v == samples[0]; })) {
        return {samples[0], samples[0]};
    }
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double half = two_sided_z(level) * sd / std::sqrt(static_cast<double>(n));
    return {mean - half, mean + half};
}

std::vector<HistogramBin> sturges_histogram(std::span<const double> samples) {
    if (samples.empty()) throw std::invalid_argument("histogram: no samples");
    const std::size_t n = samples.size();
    const auto n_bins = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))) + 1;
    auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(n_bins);
    std::vector<HistogramBin> bins(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        bins[b].left = lo + width * static_cast<double>(b);
        bins[b].right = b + 1 == n_bins ? hi : lo + width * static_cast<double>(b + 1);
    }
    for (double s : samples) {
        auto b = static_cast<std::size_t>((s - lo) / width);
        if (b >= n_bins) b = n_bins - 1;
        // Guard against rounding at interior edges.
        while (b > 0 && s < bins[b].left) --b;
        while (b + 1 < n_bins && s >= bins[b + 1].left) ++b;
        ++bins[b].count;
    }
    return bins;
}

double realization_rmse(const Trainer& trainer, const Matrix& X, std::span<const double> y,
                        const RealizationOptions& options, std::size_t index) {
    const std::uint64_t seed = derive_seed(options.master_seed, index);
    SplitSpec spec = options.split;
    spec.mode = SplitMode::Shuffled;
    if (options.vary_split) spec.seed = seed;
    const auto parts = split_indices(X.rows(), spec);
    if (parts.size() < 2) throw std::invalid_argument("realizations: split needs a train and a test part");
    const auto& train = parts.front();
    const auto& test = parts.back();
    const auto y_train = take<double>(y, train);
    const auto y_test = take<double>(y, test);
    const auto pred = trainer(X.take_rows(train), y_train, X.take_rows(test), seed);
    return metrics(y_test, pred).rmse;
}

UncertaintyReport realizations(const Trainer& trainer, const Matrix& X, std::span<const double> y,
                               const RealizationOptions& options) {
    if (options.n_realizations < 2) throw std::invalid_argument("realizations: need at least two realizations");
    if (X.rows() != y.size()) throw std::invalid_argument("realizations: X and y row counts differ");
    std::vector<double> rmse(options.n_realizations, 0.0);
    std::vector<std::uint8_t> ok(options.n_realizations, 0);
    parallel_for(options.n_realizations, options.workers, [&](std::size_t r) {
        try {
            rmse[r] = realization_rmse(trainer, X, y, options, r);
            ok[r] = std::isfinite(rmse[r]) ? 1 : 0;
        } catch (const std::exception&) {
            ok[r] = 0;
        }
    });

    UncertaintyReport report;
    report.n_realizations = options.n_realizations;
    report.ci_level = options.level;
    for (std::size_t r = 0; r < options.n_realizations; ++r) {
        if (ok[r]) {
            report.rmses.push_back(rmse[r]);
        } else {
            ++report.n_failed;
        }
    }
    if (report.n_failed * 10 > options.n_realizations) {
        throw std::runtime_error("realizations: " + std::to_string(report.n_failed) + " of " +
                                 std::to_string(options.n_realizations) + " realizations failed");
    }
    if (report.rmses.size() < 2) throw std::runtime_error("realizations: fewer than two successful realizations");
    const double n = static_cast<double>(report.rmses.size());
    report.mean = std::accumulate(report.rmses.begin(), report.rmses.end(), 0.0) / n;
    if (std::all_of(report.rmses.begin(), report.rmses.end(), [&](double v) { return v == report.rmses[0]; })) {
        report.mean = report.rmses[0];
    }
    double ss = 0.0;
    for (double v : report.rmses) ss += (v - report.mean) * (v - report.mean);
    report.std = std::sqrt(ss / (n - 1.0));
    std::tie(report.ci_lo, report.ci_hi) = confidence_interval(report.rmses, options.level);
    // Keep the CI ordered around the mean when all samples coincide.
    report.ci_lo = std::min(report.ci_lo, report.mean);
    report.ci_hi = std::max(report.ci_hi, report.mean);
    report.bins = sturges_histogram(report.rmses);
    return report;
}

nlohmann::json to_json(const MetricsReport& m) {
    nlohmann::json j = {{"mse", m.mse}, {"rmse", m.rmse}, {"mae", m.mae}, {"n", m.n}, {"units", m.units}};
    j["r2"] = m.r2 ? nlohmann::json(*m.r2) : nlohmann::json(nullptr);
    j["pearson_r2"] = m.pearson_r2 ? nlohmann::json(*m.pearson_r2) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const UncertaintyReport& u) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : u.bins) bins.push_back({{"left", b.left}, {"right", b.right}, {"count", b.count}});
    return {{"n_realizations", u.n_realizations},
            {"n_failed", u.n_failed},
            {"mean", u.mean},
            {"std", u.std},
            {"ci_level", u.ci_level},
            {"ci_lo", u.ci_lo},
            {"ci_hi", u.ci_hi},
            {"rmses", u.rmses},
            {"histogram", std::move(bins)}};
}

}  // namespace wellml
