#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wellml/data_core.hpp"

namespace wellml {

/// Uniform feature on [lo, hi]. Its contribution to the response is
/// weight * u with u = (x - lo) / (hi - lo).
struct NumericFeature {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    double weight = 0.0;
    double missing = 0.0;  // MCAR fraction
    /// Name of an earlier numeric feature this one tracks: u = u_src + N(0, jitter).
    std::string collinear_with;
    double jitter = 0.0;
};

struct CategoricalFeature {
    std::string name;
    std::vector<std::string> levels;
    std::vector<double> offsets;  // one per level
    double missing = 0.0;
};

/// weight * u_a * u_b for two numeric features.
struct Interaction {
    std::string a;
    std::string b;
    double weight = 0.0;
};

struct SynthSpec {
    std::size_t n_wells = 1000;
    std::vector<NumericFeature> numeric;
    std::vector<CategoricalFeature> categorical;
    std::vector<Interaction> interactions;
    double intercept = 0.0;
    double noise_std = 0.0;
    /// When set, overrides noise_std with this fraction of the std of the
    /// noiseless response.
    std::optional<double> noise_fraction;
    std::size_t months = 24;
    double decline_lo = 0.05;  // per-month exponential decline rate range
    double decline_hi = 0.25;
    double monthly_noise = 0.15;  // std of the multiplicative monthly factor
    std::uint64_t seed = 121;
    std::string response = "cum12_kbbl";
    std::string id_column = "well_id";

    void validate() const;

    /// Eleven numeric completion-style features (two near-copies of the
    /// location columns, one mostly missing), two categoricals and two
    /// interactions.
    static SynthSpec benchmark(std::size_t n_wells = 1000, double noise_fraction = 0.1, std::uint64_t seed = 121);
};

struct SynthData {
    /// well_id, numeric features, categorical features, response.
    Table table;
    /// Monthly rates per well; the first min(12, months) entries sum to the
    /// response.
    std::vector<std::vector<double>> monthly;
    /// Response before noise and flooring.
    std::vector<double> signal;
    double noise_std = 0.0;  // effective
    std::vector<double> decline;
};

/// Noiseless response for one well from unmasked feature values, in the order
/// of spec.numeric and spec.categorical.
double synth_signal(const SynthSpec& spec, std::span<const double> numeric, std::span<const std::size_t> codes);

SynthData generate(const SynthSpec& spec);

/// Long-format monthly table: well_id, month (1-based), oil_kbbl.
Table monthly_table(const SynthData& data);

}  // namespace wellml
