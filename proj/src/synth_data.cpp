#include "wellml/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "wellml/rng.hpp"

namespace wellml {

namespace {

void check_fraction(const std::string& name, double f) {
    if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("synth: missing fraction of '" + name + "' outside [0,1)");
}

std::size_t numeric_index(const SynthSpec& spec, const std::string& name) {
    for (std::size_t j = 0; j < spec.numeric.size(); ++j) {
        if (spec.numeric[j].name == name) return j;
    }
    throw std::invalid_argument("synth: unknown numeric feature '" + name + "'");
}

// Independent streams so that, e.g., changing the noise level leaves the
// features unchanged.
enum Stream : std::uint64_t { kFeatures = 0, kNoise = 1, kDecline = 2, kMask = 3 };

}  // namespace

void SynthSpec::validate() const {
    if (n_wells == 0) throw std::invalid_argument("synth: n_wells must be >= 1");
    if (months < 2) throw std::invalid_argument("synth: months must be >= 2");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("synth: noise_std must be >= 0");
    if (noise_fraction && !(*noise_fraction >= 0.0)) throw std::invalid_argument("synth: noise_fraction must be >= 0");
    if (!(decline_lo >= 0.0 && decline_lo <= decline_hi)) throw std::invalid_argument("synth: bad decline range");
    if (!(monthly_noise >= 0.0 && monthly_noise < 0.5)) throw std::invalid_argument("synth: monthly_noise outside [0,0.5)");
    std::set<std::string> names{response, id_column};
    if (names.size() != 2) throw std::invalid_argument("synth: response and id column share a name");
    for (std::size_t j = 0; j < numeric.size(); ++j) {
        const auto& f = numeric[j];
        if (!names.insert(f.name).second) throw std::invalid_argument("synth: duplicate column '" + f.name + "'");
        if (!(f.lo < f.hi)) throw std::invalid_argument("synth: '" + f.name + "' needs lo < hi");
        if (!(f.jitter >= 0.0)) throw std::invalid_argument("synth: '" + f.name + "' has negative jitter");
        check_fraction(f.name, f.missing);
        if (!f.collinear_with.empty() && numeric_index(*this, f.collinear_with) >= j) {
            throw std::invalid_argument("synth: '" + f.name + "' must follow the feature it tracks");
        }
    }
    for (const auto& c : categorical) {
        if (!names.insert(c.name).second) throw std::invalid_argument("synth: duplicate column '" + c.name + "'");
        if (c.levels.empty() || c.levels.size() != c.offsets.size()) {
            throw std::invalid_argument("synth: '" + c.name + "' needs one offset per level");
        }
        check_fraction(c.name, c.missing);
    }
    for (const auto& in : interactions) {
        numeric_index(*this, in.a);
        numeric_index(*this, in.b);
    }
}

SynthSpec SynthSpec::benchmark(std::size_t n_wells, double noise_fraction, std::uint64_t seed) {
    SynthSpec s;
    s.n_wells = n_wells;
    s.seed = seed;
    s.noise_fraction = noise_fraction;
    s.intercept = 20.0;
    s.numeric = {
        {"lateral_length_ft", 5000, 10500, 60, 0.03, {}, 0},
        {"stages", 15, 60, 40, 0.05, {}, 0},
        {"proppant_lb_per_ft", 400, 2000, 80, 0.05, {}, 0},
        {"fluid_bbl_per_ft", 10, 50, 30, 0.05, {}, 0},
        {"well_spacing_ft", 500, 1500, 25, 0.02, {}, 0},
        {"tvd_ft", 9000, 11500, -15, 0.0, {}, 0},
        {"longitude", -104.0, -102.0, 20, 0.0, {}, 0},
        {"latitude", 47.0, 49.0, 10, 0.0, {}, 0},
        {"bottom_hole_longitude", -104.0, -102.0, 0, 0.0, "longitude", 0.01},
        {"bottom_hole_latitude", 47.0, 49.0, 0, 0.0, "latitude", 0.01},
        {"initial_pressure_psi", 4000, 7000, 0, 0.40, {}, 0},
    };
    s.categorical = {
        {"formation", {"MB", "TF1", "TF2"}, {15, 0, -10}, 0.02},
        {"operator_group", {"A", "B", "C", "D"}, {5, 0, -5, 8}, 0.0},
    };
    s.interactions = {{"lateral_length_ft", "proppant_lb_per_ft", 40}, {"stages", "fluid_bbl_per_ft", 20}};
    return s;
}

double synth_signal(const SynthSpec& spec, std::span<const double> numeric, std::span<const std::size_t> codes) {
    if (numeric.size() != spec.numeric.size() || codes.size() != spec.categorical.size()) {
        throw std::invalid_argument("synth_signal: feature count mismatch");
    }
    const auto unit = [&](std::size_t j) {
        const auto& f = spec.numeric[j];
        return (numeric[j] - f.lo) / (f.hi - f.lo);
    };
    double s = spec.intercept;
    for (std::size_t j = 0; j < numeric.size(); ++j) s += spec.numeric[j].weight * unit(j);
    for (const auto& in : spec.interactions) {
        s += in.weight * unit(numeric_index(spec, in.a)) * unit(numeric_index(spec, in.b));
    }
    for (std::size_t c = 0; c < codes.size(); ++c) s += spec.categorical[c].offsets.at(codes[c]);
    return s;
}

SynthData generate(const SynthSpec& spec) {
    spec.validate();
    const std::size_t n = spec.n_wells;
    const std::size_t p = spec.numeric.size();
    const std::size_t q = spec.categorical.size();

    Rng features(derive_seed(spec.seed, kFeatures));
    std::vector<std::vector<double>> x(p, std::vector<double>(n));
    std::vector<std::vector<std::size_t>> codes(q, std::vector<std::size_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            const auto& f = spec.numeric[j];
            double u;
            if (f.collinear_with.empty()) {
                u = features.uniform();
            } else {
                const auto& src = spec.numeric[numeric_index(spec, f.collinear_with)];
                const double u_src = (x[numeric_index(spec, f.collinear_with)][i] - src.lo) / (src.hi - src.lo);
                u = u_src + f.jitter * features.normal();
            }
            x[j][i] = f.lo + u * (f.hi - f.lo);
        }
        for (std::size_t c = 0; c < q; ++c) codes[c][i] = features.index(spec.categorical[c].levels.size());
    }

    SynthData out;
    out.signal.resize(n);
    std::vector<double> xi(p);
    std::vector<std::size_t> ci(q);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) xi[j] = x[j][i];
        for (std::size_t c = 0; c < q; ++c) ci[c] = codes[c][i];
        out.signal[i] = synth_signal(spec, xi, ci);
    }

    out.noise_std = spec.noise_std;
    if (spec.noise_fraction) {
        const double mean = std::accumulate(out.signal.begin(), out.signal.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double s : out.signal) ss += (s - mean) * (s - mean);
        out.noise_std = *spec.noise_fraction * std::sqrt(ss / static_cast<double>(n));
    }
    Rng noise(derive_seed(spec.seed, kNoise));
    std::vector<double> response(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double eps = out.noise_std > 0.0 ? noise.normal(0.0, out.noise_std) : 0.0;
        response[i] = std::max(0.0, out.signal[i] + eps);
    }

    // q_t = q0 exp(-D t) (1 + e_t), with q0 chosen so the first year sums to
    // the response.
    Rng decline(derive_seed(spec.seed, kDecline));
    const std::size_t first_year = std::min<std::size_t>(12, spec.months);
    out.monthly.assign(n, std::vector<double>(spec.months));
    out.decline.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double D = decline.uniform(spec.decline_lo, spec.decline_hi);
        out.decline[i] = D;
        auto& q = out.monthly[i];
        for (std::size_t t = 0; t < spec.months; ++t) {
            const double e = std::clamp(spec.monthly_noise * decline.normal(), -0.9, 0.9);
            q[t] = std::exp(-D * static_cast<double>(t)) * (1.0 + e);
        }
        const double shape = std::accumulate(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(first_year), 0.0);
        for (auto& v : q) v *= response[i] / shape;
    }

    Rng mask(derive_seed(spec.seed, kMask));
    const auto draw_mask = [&](double fraction) {
        std::vector<std::uint8_t> m(n, 0);
        if (fraction > 0.0) {
            for (auto& v : m) v = mask.uniform() < fraction ? 1 : 0;
        }
        return m;
    };

    Table t(n);
    std::vector<double> ids(n);
    std::iota(ids.begin(), ids.end(), 1.0);
    t.add_numeric(spec.id_column, std::move(ids));
    for (std::size_t j = 0; j < p; ++j) t.add_numeric(spec.numeric[j].name, x[j], draw_mask(spec.numeric[j].missing));
    for (std::size_t c = 0; c < q; ++c) {
        const auto& f = spec.categorical[c];
        t.add_categorical(f.name, codes[c], draw_mask(f.missing), f.levels);
    }
    t.add_numeric(spec.response, std::move(response));
    out.table = std::move(t);
    return out;
}

Table monthly_table(const SynthData& data) {
    const Column& ids = data.table.column(0);
    std::vector<double> well, month, rate;
    for (std::size_t i = 0; i < data.monthly.size(); ++i) {
        for (std::size_t m = 0; m < data.monthly[i].size(); ++m) {
            well.push_back(ids.values[i]);
            month.push_back(static_cast<double>(m + 1));
            rate.push_back(data.monthly[i][m]);
        }
    }
    Table t(well.size());
    t.add_numeric(ids.name, std::move(well));
    t.add_numeric("month", std::move(month));
    t.add_numeric("oil_kbbl", std::move(rate));
    return t;
}

}  // namespace wellml
