#include "wellml/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "wellml/parallel.hpp"

namespace wellml {

Dimension Dimension::int_uniform(std::string name, std::int64_t lo, std::int64_t hi) {
    return {std::move(name), DimensionKind::IntUniform, static_cast<double>(lo), static_cast<double>(hi), {}};
}

Dimension Dimension::float_uniform(std::string name, double lo, double hi) {
    return {std::move(name), DimensionKind::FloatUniform, lo, hi, {}};
}

Dimension Dimension::log_uniform(std::string name, double lo, double hi) {
    return {std::move(name), DimensionKind::FloatLogUniform, lo, hi, {}};
}

Dimension Dimension::categorical(std::string name, std::vector<std::string> options) {
    const double hi = static_cast<double>(options.size()) - 1.0;
    return {std::move(name), DimensionKind::Categorical, 0.0, hi, std::move(options)};
}

bool Dimension::contains(double value) const {
    switch (kind) {
    case DimensionKind::IntUniform:
        return value >= lo && value <= hi && value == std::round(value);
    case DimensionKind::Categorical:
        return value >= 0.0 && value < static_cast<double>(options.size()) && value == std::round(value);
    default:
        return value >= lo && value <= hi;
    }
}

void SearchSpace::validate() const {
    if (dimensions.empty()) throw std::invalid_argument("search space: no dimensions");
    for (const auto& d : dimensions) {
        if (d.kind == DimensionKind::Categorical) {
            if (d.options.empty()) throw std::invalid_argument("search space: '" + d.name + "' has no options");
            continue;
        }
        if (!(d.lo < d.hi)) throw std::invalid_argument("search space: '" + d.name + "' needs lo < hi");
        if (d.kind == DimensionKind::FloatLogUniform && !(d.lo > 0.0)) {
            throw std::invalid_argument("search space: log-uniform '" + d.name + "' needs lo > 0");
        }
    }
}

const Dimension& SearchSpace::at(std::string_view name) const {
    for (const auto& d : dimensions) {
        if (d.name == name) return d;
    }
    throw std::out_of_range("search space: no dimension '" + std::string(name) + "'");
}

const Trial* Study::best() const {
    const Trial* best = nullptr;
    for (const auto& t : trials) {
        if (t.status != TrialStatus::Complete) continue;
        if (best == nullptr || t.value < best->value) best = &t;
    }
    return best;
}

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

/// Numeric dimensions are modeled on [lo, hi] in "internal" units: log space
/// for log-uniform dimensions, the raw value otherwise.
struct Interval {
    double lo, hi;
};

Interval internal_interval(const Dimension& d) {
    if (d.kind == DimensionKind::FloatLogUniform) return {std::log(d.lo), std::log(d.hi)};
    // Integers own a unit cell each, so the end values keep full mass.
    if (d.kind == DimensionKind::IntUniform) return {d.lo - 0.5, d.hi + 0.5};
    return {d.lo, d.hi};
}

double to_internal(const Dimension& d, double v) { return d.kind == DimensionKind::FloatLogUniform ? std::log(v) : v; }

double from_internal(const Dimension& d, double v) {
    switch (d.kind) {
    case DimensionKind::FloatLogUniform:
        return std::clamp(std::exp(v), d.lo, d.hi);
    case DimensionKind::IntUniform:
        return std::clamp(std::round(v), d.lo, d.hi);
    default:
        return std::clamp(v, d.lo, d.hi);
    }
}

double uniform_value(const Dimension& d, Rng& rng) {
    if (d.kind == DimensionKind::Categorical) return static_cast<double>(rng.index(d.options.size()));
    const Interval iv = internal_interval(d);
    if (d.kind == DimensionKind::IntUniform) {
        return d.lo + static_cast<double>(rng.index(static_cast<std::size_t>(d.hi - d.lo) + 1));
    }
    return from_internal(d, rng.uniform(iv.lo, iv.hi));
}

/// Gaussian kernel density with reflection at both bounds.
class ReflectedKde {
public:
    ReflectedKde(std::vector<double> centers, Interval iv) : centers_(std::move(centers)), iv_(iv) {
        const double range = iv.hi - iv.lo;
        const double m = static_cast<double>(std::max<std::size_t>(centers_.size(), 1));
        bandwidth_ = std::max(range / std::sqrt(m), 1e-6 * range);
    }

    double density(double x) const {
        if (centers_.empty()) return 1.0 / (iv_.hi - iv_.lo);
        double sum = 0.0;
        for (double mu : centers_) {
            sum += kernel(x - mu) + kernel(x - (2.0 * iv_.lo - mu)) + kernel(x - (2.0 * iv_.hi - mu));
        }
        return sum / (static_cast<double>(centers_.size()) * bandwidth_);
    }

    double sample(Rng& rng) const {
        if (centers_.empty()) return rng.uniform(iv_.lo, iv_.hi);
        double x = centers_[rng.index(centers_.size())] + bandwidth_ * rng.normal();
        for (int guard = 0; guard < 64 && (x < iv_.lo || x > iv_.hi); ++guard) {
            x = x < iv_.lo ? 2.0 * iv_.lo - x : 2.0 * iv_.hi - x;
        }
        return std::clamp(x, iv_.lo, iv_.hi);
    }

private:
    double kernel(double dx) const {
        const double z = dx / bandwidth_;
        return kInvSqrt2Pi * std::exp(-0.5 * z * z);
    }

    std::vector<double> centers_;
    Interval iv_;
    double bandwidth_ = 1.0;
};

/// Option probabilities from counts with pseudo-count 1.
std::vector<double> smoothed_weights(const std::vector<double>& values, std::size_t n_options) {
    std::vector<double> w(n_options, 1.0);
    for (double v : values) w[static_cast<std::size_t>(v)] += 1.0;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= total;
    return w;
}

std::size_t sample_weighted(const std::vector<double>& w, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        acc += w[k];
        if (u < acc) return k;
    }
    return w.size() - 1;
}

}  // namespace

Assignment uniform_suggest(const SearchSpace& space, Rng& rng) {
    Assignment a;
    for (const auto& d : space.dimensions) a[d.name] = uniform_value(d, rng);
    return a;
}

Assignment tpe_suggest(const Study& study) { return tpe_suggest(study, study.trials.size()); }

Assignment tpe_suggest(const Study& study, std::size_t trial_id) {
    study.space.validate();
    Rng rng(derive_seed(study.seed, trial_id));

    std::vector<const Trial*> complete;
    for (const auto& t : study.trials) {
        if (t.status == TrialStatus::Complete) complete.push_back(&t);
    }
    if (complete.size() < std::max<std::size_t>(study.tpe.n_startup, 1)) return uniform_suggest(study.space, rng);

    std::stable_sort(complete.begin(), complete.end(),
                     [](const Trial* a, const Trial* b) { return a->value < b->value; });
    const auto n_good = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(study.tpe.gamma * static_cast<double>(complete.size()))), 1,
        complete.size());

    Assignment out;
    for (const auto& d : study.space.dimensions) {
        std::vector<double> good, bad;
        for (std::size_t k = 0; k < complete.size(); ++k) {
            const auto it = complete[k]->params.find(d.name);
            if (it == complete[k]->params.end()) continue;
            const double v = d.kind == DimensionKind::Categorical ? it->second : to_internal(d, it->second);
            (k < n_good ? good : bad).push_back(v);
        }

        double best_x = 0.0;
        double best_score = -std::numeric_limits<double>::infinity();
        if (d.kind == DimensionKind::Categorical) {
            const auto wl = smoothed_weights(good, d.options.size());
            const auto wg = smoothed_weights(bad, d.options.size());
            for (std::size_t c = 0; c < study.tpe.n_candidates; ++c) {
                const std::size_t k = sample_weighted(wl, rng);
                const double score = std::log(wl[k]) - std::log(wg[k]);
                if (score > best_score) {
                    best_score = score;
                    best_x = static_cast<double>(k);
                }
            }
            out[d.name] = best_x;
            continue;
        }

        const Interval iv = internal_interval(d);
        const ReflectedKde l(std::move(good), iv);
        const ReflectedKde g(std::move(bad), iv);
        for (std::size_t c = 0; c < study.tpe.n_candidates; ++c) {
            const double x = l.sample(rng);
            const double score = std::log(l.density(x)) - std::log(std::max(g.density(x), 1e-300));
            if (score > best_score || c == 0) {
                best_score = score;
                best_x = x;
            }
        }
        out[d.name] = from_internal(d, best_x);
    }
    return out;
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::RandomForest ? "rf" : "gbm"; }

ModelKind model_kind_from_string(std::string_view name) {
    if (name == "rf") return ModelKind::RandomForest;
    if (name == "gbm") return ModelKind::GradientBoosting;
    throw std::invalid_argument("unknown model kind '" + std::string(name) + "' (expected rf or gbm)");
}

SearchSpace default_space(ModelKind kind) {
    SearchSpace s;
    if (kind == ModelKind::RandomForest) {
        s.dimensions = {Dimension::int_uniform("n_estimators", 50, 500), Dimension::int_uniform("max_depth", 2, 32),
                        Dimension::int_uniform("min_samples_split", 2, 10),
                        Dimension::int_uniform("min_samples_leaf", 1, 10)};
    } else {
        s.dimensions = {Dimension::log_uniform("learning_rate", 1e-3, 0.3),
                        Dimension::int_uniform("max_depth", 3, 12),
                        Dimension::int_uniform("n_estimators", 100, 1000),
                        Dimension::float_uniform("subsample", 0.5, 1.0),
                        Dimension::float_uniform("colsample_bytree", 0.5, 1.0),
                        Dimension::int_uniform("min_child_weight", 1, 10),
                        Dimension::float_uniform("gamma", 0.0, 1.0),
                        Dimension::float_uniform("reg_alpha", 0.0, 1.0)};
    }
    return s;
}

namespace {

std::size_t as_count(const std::string& name, double v) {
    if (!(v >= 0.0) || v != std::round(v)) throw std::invalid_argument("parameter '" + name + "' must be a count");
    return static_cast<std::size_t>(v);
}

}  // namespace

RfParams rf_params_from(const Assignment& a, RfParams p) {
    for (const auto& [name, v] : a) {
        if (name == "n_estimators") {
            p.n_estimators = as_count(name, v);
        } else if (name == "max_depth") {
            p.tree.max_depth = as_count(name, v);
        } else if (name == "min_samples_split") {
            p.tree.min_samples_split = as_count(name, v);
        } else if (name == "min_samples_leaf") {
            p.tree.min_samples_leaf = as_count(name, v);
        } else if (name == "max_features") {
            p.tree.feature_subset_size = as_count(name, v);
        } else {
            throw std::invalid_argument("unknown random forest parameter '" + name + "'");
        }
    }
    return p;
}

GbmParams gbm_params_from(const Assignment& a, GbmParams p) {
    for (const auto& [name, v] : a) {
        if (name == "learning_rate") {
            p.learning_rate = v;
        } else if (name == "max_depth") {
            p.max_depth = as_count(name, v);
        } else if (name == "n_estimators") {
            p.n_estimators = as_count(name, v);
        } else if (name == "subsample") {
            p.subsample = v;
        } else if (name == "colsample_bytree") {
            p.colsample_bytree = v;
        } else if (name == "min_child_weight") {
            p.min_child_weight = v;
        } else if (name == "gamma") {
            p.gamma = v;
        } else if (name == "reg_alpha") {
            p.reg_alpha = v;
        } else if (name == "reg_lambda") {
            p.reg_lambda = v;
        } else {
            throw std::invalid_argument("unknown gradient boosting parameter '" + name + "'");
        }
    }
    return p;
}

Trainer make_trainer(ModelKind kind, const RfParams& rf, const GbmParams& gbm, std::size_t workers) {
    if (kind == ModelKind::RandomForest) {
        return [rf, workers](const Matrix& X, std::span<const double> y, const Matrix& X_test, std::uint64_t seed) {
            RfParams p = rf;
            p.seed = seed;
            return predict_forest(fit_forest(X, y, p, workers), X_test);
        };
    }
    return [gbm](const Matrix& X, std::span<const double> y, const Matrix& X_test, std::uint64_t seed) {
        GbmParams p = gbm;
        p.seed = seed;
        return predict_gbm(fit_gbm(X, y, p), X_test);
    };
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    if (n < k) throw std::invalid_argument("kfold: fewer rows than folds");
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                        perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return folds;
}

double cv_mse(const Trainer& trainer, const Matrix& X, std::span<const double> y,
              const std::vector<std::vector<std::size_t>>& folds, std::uint64_t model_seed) {
    double total = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        }
        const auto& val = folds[f];
        const auto y_train = take<double>(y, train);
        const auto y_val = take<double>(y, val);
        const auto pred = trainer(X.take_rows(train), y_train, X.take_rows(val), model_seed);
        total += metrics(y_val, pred).mse;
    }
    return total / static_cast<double>(folds.size());
}

double kfold_cv_objective(ModelKind kind, const Assignment& params, const Matrix& X, std::span<const double> y,
                          std::size_t k, std::uint64_t seed, const RfParams& rf_base, const GbmParams& gbm_base) {
    const RfParams rf = rf_params_from(kind == ModelKind::RandomForest ? params : Assignment{}, rf_base);
    const GbmParams gbm = gbm_params_from(kind == ModelKind::GradientBoosting ? params : Assignment{}, gbm_base);
    const Trainer trainer = make_trainer(kind, rf, gbm);
    const std::uint64_t model_seed = kind == ModelKind::RandomForest ? rf.seed : gbm.seed;
    return cv_mse(trainer, X, y, kfold_indices(X.rows(), k, seed), model_seed);
}

Study run_study(const SearchSpace& space, const std::function<double(const Assignment&)>& objective,
                const StudyOptions& options, std::vector<Trial> resume) {
    if (options.n_trials < 1) throw std::invalid_argument("run_study: n_trials must be >= 1");
    space.validate();
    Study study;
    study.space = space;
    study.seed = options.seed;
    study.tpe = options.tpe;
    study.trials = std::move(resume);

    const std::size_t workers = std::max<std::size_t>(options.workers, 1);
    while (study.trials.size() < options.n_trials) {
        const std::size_t first = study.trials.size();
        const std::size_t batch = std::min(workers, options.n_trials - first);
        std::vector<Trial> pending(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            pending[b].id = first + b;
            pending[b].params = tpe_suggest(study, first + b);
        }
        parallel_for(batch, workers, [&](std::size_t b) {
            Trial& t = pending[b];
            try {
                t.value = objective(t.params);
                if (!std::isfinite(t.value)) {
                    t.status = TrialStatus::Failed;
                    t.error = "non-finite objective";
                }
            } catch (const std::exception& e) {
                t.status = TrialStatus::Failed;
                t.error = e.what();
            }
        });
        for (auto& t : pending) {
            if (options.on_trial) options.on_trial(t);
            study.trials.push_back(std::move(t));
        }
    }
    if (study.best() == nullptr) throw std::runtime_error("run_study: every trial failed");
    return study;
}

Study run_study(ModelKind kind, const SearchSpace& space, const Matrix& X, std::span<const double> y,
                const StudyOptions& options, std::vector<Trial> resume) {
    const auto objective = [&](const Assignment& a) {
        return kfold_cv_objective(kind, a, X, y, options.folds, options.seed, options.rf_base, options.gbm_base);
    };
    return run_study(space, objective, options, std::move(resume));
}

nlohmann::json trial_to_json(const Trial& trial, const SearchSpace& space) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, v] : trial.params) {
        const Dimension& d = space.at(name);
        if (d.kind == DimensionKind::Categorical) {
            params[name] = d.options.at(static_cast<std::size_t>(v));
        } else if (d.kind == DimensionKind::IntUniform) {
            params[name] = static_cast<std::int64_t>(v);
        } else {
            params[name] = v;
        }
    }
    nlohmann::json j = {{"trial", trial.id},
                        {"state", trial.status == TrialStatus::Complete ? "COMPLETE" : "FAILED"},
                        {"params", std::move(params)}};
    j["value"] = trial.status == TrialStatus::Complete ? nlohmann::json(trial.value) : nlohmann::json(nullptr);
    if (!trial.error.empty()) j["error"] = trial.error;
    return j;
}

Trial trial_from_json(const nlohmann::json& doc, const SearchSpace& space) {
    Trial t;
    t.id = doc.at("trial").get<std::size_t>();
    const auto state = doc.at("state").get<std::string>();
    if (state == "COMPLETE") {
        t.status = TrialStatus::Complete;
        t.value = doc.at("value").get<double>();
    } else if (state == "FAILED") {
        t.status = TrialStatus::Failed;
        t.error = doc.value("error", "");
    } else {
        throw std::runtime_error("trial log: unknown state '" + state + "'");
    }
    for (const auto& [name, v] : doc.at("params").items()) {
        const Dimension& d = space.at(name);
        double value;
        if (d.kind == DimensionKind::Categorical) {
            const auto label = v.get<std::string>();
            const auto it = std::find(d.options.begin(), d.options.end(), label);
            if (it == d.options.end()) throw std::runtime_error("trial log: unknown option '" + label + "'");
            value = static_cast<double>(it - d.options.begin());
        } else {
            value = v.get<double>();
        }
        if (!d.contains(value)) throw std::runtime_error("trial log: '" + name + "' outside its bounds");
        t.params[name] = value;
    }
    return t;
}

void append_trial(std::ostream& out, const Trial& trial, const SearchSpace& space, const nlohmann::json& extra) {
    nlohmann::json j = extra;
    j.update(trial_to_json(trial, space));
    out << j.dump() << '\n';
    out.flush();
}

std::vector<Trial> read_trials(std::istream& in, const SearchSpace& space) {
    std::vector<Trial> trials;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        trials.push_back(trial_from_json(nlohmann::json::parse(line), space));
        if (trials.back().id != trials.size() - 1) throw std::runtime_error("trial log: ids are not consecutive");
    }
    return trials;
}

}  // namespace wellml
