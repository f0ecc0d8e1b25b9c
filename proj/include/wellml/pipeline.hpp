#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wellml/boosting.hpp"
#include "wellml/forest.hpp"
#include "wellml/hyperopt.hpp"
#include "wellml/lstm.hpp"
#include "wellml/synth_data.hpp"

namespace wellml {

inline constexpr const char* kVersion = "0.1.0";

enum class ImputerKind { None, Knn, Iterative };

struct PreprocessConfig {
    double missing_threshold = 0.25;
    ImputerKind imputer = ImputerKind::Knn;
    std::size_t knn_k = 5;
    std::size_t iterative_rounds = 10;
    double corr_cutoff = 0.95;
    /// Categorical columns to one-hot encode; empty means all.
    std::vector<std::string> encode;
    /// Columns dropped right after ingest (e.g. free-text identifiers).
    std::vector<std::string> drop;
};

struct TuneConfig {
    std::size_t n_trials = 100;
    std::size_t folds = 5;
};

struct ModelConfig {
    ModelKind kind = ModelKind::RandomForest;
    /// Fixed hyperparameters by name, applied on top of the defaults.
    Assignment params;
    std::optional<TuneConfig> tune;
    /// Optional replacement for the default tuning space.
    std::optional<SearchSpace> space;
};

struct LstmConfig {
    std::size_t window = 6;
    LstmHyper hyper;
    /// Long-format monthly CSV (id column, month, rate). Not needed with a
    /// synthetic input, whose monthly series are used directly.
    std::string monthly_path;
    std::string month_column = "month";
    std::string rate_column = "oil_kbbl";
};

struct UncertaintyConfig {
    std::size_t realizations = 100;
    double level = 0.95;
    /// Tree count for realization refits; 0 keeps the trained model's value.
    std::size_t n_estimators = 0;
};

/// A full run description. Exactly one of input_path / synth is set.
struct PipelineConfig {
    std::string input_path;
    std::optional<SynthSpec> synth;
    std::string response = "cum12_kbbl";
    std::string id_column = "well_id";
    std::string units = "thousand barrels";
    PreprocessConfig preprocess;
    std::vector<ModelConfig> models;
    std::optional<LstmConfig> lstm;
    double test_fraction = 0.2;
    UncertaintyConfig uncertainty;
    std::uint64_t seed = 121;
    std::string out_dir = "out";

    void validate() const;
};

/// Parses a JSON config document; unknown keys anywhere are errors. Relative
/// paths are resolved against `base_dir`.
PipelineConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Canonical JSON form; parse_config(config_to_json(c)) == c field-wise.
nlohmann::json config_to_json(const PipelineConfig& config);
/// SHA-256 hex digest of the canonical JSON dump.
std::string config_hash(const PipelineConfig& config);
std::string sha256_hex(std::string_view data);

enum class Stage { Ingest, Preprocess, Split, Tune, Train, Evaluate, Uncertainty };

std::string_view to_string(Stage stage);

/// Error raised by run_pipeline, tagged with the stage that failed.
class StageError : public std::runtime_error {
public:
    StageError(Stage stage, const std::string& message);
    Stage stage() const noexcept { return stage_; }

private:
    Stage stage_;
};

struct RunOptions {
    /// Last stage to execute; later stages are skipped.
    Stage stop_after = Stage::Uncertainty;
    std::size_t workers = 1;
    /// Fixed timestamp for metrics.json (tests); empty means current UTC time.
    std::string timestamp;
};

struct RunSummary {
    std::filesystem::path out_dir;
    std::vector<Stage> completed;
    nlohmann::json metrics;
};

/// Runs ingest, preprocess, split, tune, train, evaluate and uncertainty,
/// writing artifacts into config.out_dir. On failure a FAILED file holding
/// the stage-tagged message is written, partial outputs are kept and a
/// StageError is thrown.
RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace wellml
