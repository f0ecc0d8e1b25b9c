#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wellml/boosting.hpp"
#include "wellml/evalkit.hpp"
#include "wellml/forest.hpp"

namespace wellml {

enum class DimensionKind { IntUniform, FloatUniform, FloatLogUniform, Categorical };

struct Dimension {
    std::string name;
    DimensionKind kind = DimensionKind::FloatUniform;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::string> options;  // Categorical only

    static Dimension int_uniform(std::string name, std::int64_t lo, std::int64_t hi);
    static Dimension float_uniform(std::string name, double lo, double hi);
    static Dimension log_uniform(std::string name, double lo, double hi);
    static Dimension categorical(std::string name, std::vector<std::string> options);

    bool contains(double value) const;
};

struct SearchSpace {
    std::vector<Dimension> dimensions;

    void validate() const;
    const Dimension& at(std::string_view name) const;
};

/// Parameter values by dimension name. Integers are stored as integral
/// doubles; categorical values as the option index.
using Assignment = std::map<std::string, double, std::less<>>;

enum class TrialStatus { Complete, Failed };

struct Trial {
    std::size_t id = 0;
    Assignment params;
    double value = 0.0;  // mean CV MSE
    TrialStatus status = TrialStatus::Complete;
    std::string error;
};

struct TpeSettings {
    std::size_t n_startup = 10;
    double gamma = 0.25;
    std::size_t n_candidates = 24;
};

struct Study {
    SearchSpace space;
    std::uint64_t seed = 121;
    TpeSettings tpe;
    std::vector<Trial> trials;

    /// Complete trial with the lowest value; ties go to the earlier trial.
    const Trial* best() const;
};

/// Draws one assignment for trial number `study.trials.size()`. Uses uniform
/// sampling until n_startup trials are complete, then univariate TPE.
Assignment tpe_suggest(const Study& study);

/// Same as tpe_suggest but for an explicit trial id (used when several
/// suggestions are drawn from one history).
Assignment tpe_suggest(const Study& study, std::size_t trial_id);

Assignment uniform_suggest(const SearchSpace& space, Rng& rng);

enum class ModelKind { RandomForest, GradientBoosting };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

SearchSpace default_space(ModelKind kind);

/// Applies an assignment on top of base parameters. Unknown names are errors.
RfParams rf_params_from(const Assignment& a, RfParams base = {});
GbmParams gbm_params_from(const Assignment& a, GbmParams base = {});

Trainer make_trainer(ModelKind kind, const RfParams& rf, const GbmParams& gbm, std::size_t workers = 1);

/// k folds from a seeded shuffle; the first n % k folds get one extra row.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);

/// Mean over folds of the validation MSE of a model fitted on the other folds.
double cv_mse(const Trainer& trainer, const Matrix& X, std::span<const double> y,
              const std::vector<std::vector<std::size_t>>& folds, std::uint64_t model_seed);

double kfold_cv_objective(ModelKind kind, const Assignment& params, const Matrix& X, std::span<const double> y,
                          std::size_t k, std::uint64_t seed, const RfParams& rf_base = {},
                          const GbmParams& gbm_base = {});

struct StudyOptions {
    std::size_t n_trials = 100;
    std::size_t folds = 5;
    std::uint64_t seed = 121;
    TpeSettings tpe;
    RfParams rf_base;
    GbmParams gbm_base;
    /// Trials evaluated concurrently. Suggestions for a batch are drawn from
    /// the same history, so results depend on this value.
    std::size_t workers = 1;
    /// Receives each finished trial in id order (e.g. to append to a log).
    std::function<void(const Trial&)> on_trial;
};

/// Generic study loop over an arbitrary objective; trials whose objective
/// throws or returns a non-finite value are marked Failed. `resume` trials
/// are kept and counted toward n_trials.
Study run_study(const SearchSpace& space, const std::function<double(const Assignment&)>& objective,
                const StudyOptions& options, std::vector<Trial> resume = {});

Study run_study(ModelKind kind, const SearchSpace& space, const Matrix& X, std::span<const double> y,
                const StudyOptions& options, std::vector<Trial> resume = {});

nlohmann::json trial_to_json(const Trial& trial, const SearchSpace& space);
Trial trial_from_json(const nlohmann::json& doc, const SearchSpace& space);

/// One JSON object per line.
void append_trial(std::ostream& out, const Trial& trial, const SearchSpace& space,
                  const nlohmann::json& extra = nlohmann::json::object());
std::vector<Trial> read_trials(std::istream& in, const SearchSpace& space);

}  // namespace wellml
