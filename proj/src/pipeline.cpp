#include "wellml/pipeline.hpp"

#include <openssl/evp.h>

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "wellml/preprocess.hpp"
#include "wellml/report.hpp"

namespace wellml {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON reading: every object is checked against its allowed keys.

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument("config: bad value for '" + std::string(key) + "' in " + where);
    }
}

void read_count(const json& obj, const char* key, std::size_t& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw std::invalid_argument("config: '" + std::string(key) + "' in " + where + " must be a non-negative integer");
    }
    out = v.get<std::size_t>();
}

void read_seed(const json& obj, const char* key, std::uint64_t& out, const std::string& where) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw std::invalid_argument("config: '" + std::string(key) + "' in " + where + " must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

std::string_view imputer_name(ImputerKind k) {
    switch (k) {
    case ImputerKind::None: return "none";
    case ImputerKind::Knn: return "knn";
    case ImputerKind::Iterative: return "iterative";
    }
    return "none";
}

ImputerKind imputer_from(const std::string& s) {
    if (s == "none") return ImputerKind::None;
    if (s == "knn") return ImputerKind::Knn;
    if (s == "iterative") return ImputerKind::Iterative;
    throw std::invalid_argument("config: unknown imputer '" + s + "' (expected knn, iterative or none)");
}

std::string_view dimension_type(DimensionKind k) {
    switch (k) {
    case DimensionKind::IntUniform: return "int";
    case DimensionKind::FloatUniform: return "float";
    case DimensionKind::FloatLogUniform: return "log";
    case DimensionKind::Categorical: return "categorical";
    }
    return "float";
}

SearchSpace parse_space(const json& arr) {
    if (!arr.is_array()) throw std::invalid_argument("config: 'space' must be an array");
    SearchSpace s;
    for (const auto& d : arr) {
        check_keys(d, {"name", "type", "low", "high", "choices"}, "space entry");
        std::string name, type;
        read(d, "name", name, "space entry");
        read(d, "type", type, "space entry");
        if (type == "categorical") {
            std::vector<std::string> choices;
            read(d, "choices", choices, "space entry");
            s.dimensions.push_back(Dimension::categorical(name, choices));
            continue;
        }
        double lo = 0, hi = 0;
        read(d, "low", lo, "space entry");
        read(d, "high", hi, "space entry");
        if (type == "int") {
            if (lo != std::round(lo) || hi != std::round(hi)) {
                throw std::invalid_argument("config: int dimension '" + name + "' needs integer bounds");
            }
            s.dimensions.push_back(Dimension::int_uniform(name, static_cast<std::int64_t>(lo),
                                                          static_cast<std::int64_t>(hi)));
        } else if (type == "float") {
            s.dimensions.push_back(Dimension::float_uniform(name, lo, hi));
        } else if (type == "log") {
            s.dimensions.push_back(Dimension::log_uniform(name, lo, hi));
        } else {
            throw std::invalid_argument("config: unknown dimension type '" + type + "'");
        }
    }
    s.validate();
    return s;
}

json space_to_json(const SearchSpace& s) {
    json arr = json::array();
    for (const auto& d : s.dimensions) {
        json j = {{"name", d.name}, {"type", dimension_type(d.kind)}};
        if (d.kind == DimensionKind::Categorical) {
            j["choices"] = d.options;
        } else {
            j["low"] = d.lo;
            j["high"] = d.hi;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

SynthSpec parse_synth(const json& j, std::uint64_t default_seed) {
    check_keys(j, {"n_wells", "noise_std", "noise_fraction", "months", "seed", "decline_lo", "decline_hi",
                   "monthly_noise", "intercept", "numeric", "categorical", "interactions"},
               "synth");
    std::size_t n_wells = 1000;
    read_count(j, "n_wells", n_wells, "synth");
    SynthSpec s = SynthSpec::benchmark(n_wells, 0.1, default_seed);
    read_seed(j, "seed", s.seed, "synth");
    if (j.contains("noise_std")) {
        s.noise_fraction.reset();
        read(j, "noise_std", s.noise_std, "synth");
    }
    if (j.contains("noise_fraction")) {
        if (j.contains("noise_std")) throw std::invalid_argument("config: synth sets both noise_std and noise_fraction");
        double f = 0.0;
        read(j, "noise_fraction", f, "synth");
        s.noise_fraction = f;
    }
    read_count(j, "months", s.months, "synth");
    read(j, "decline_lo", s.decline_lo, "synth");
    read(j, "decline_hi", s.decline_hi, "synth");
    read(j, "monthly_noise", s.monthly_noise, "synth");
    read(j, "intercept", s.intercept, "synth");
    if (j.contains("numeric")) {
        s.numeric.clear();
        for (const auto& f : j.at("numeric")) {
            check_keys(f, {"name", "low", "high", "weight", "missing", "collinear_with", "jitter"}, "synth.numeric");
            NumericFeature nf;
            read(f, "name", nf.name, "synth.numeric");
            read(f, "low", nf.lo, "synth.numeric");
            read(f, "high", nf.hi, "synth.numeric");
            read(f, "weight", nf.weight, "synth.numeric");
            read(f, "missing", nf.missing, "synth.numeric");
            read(f, "collinear_with", nf.collinear_with, "synth.numeric");
            read(f, "jitter", nf.jitter, "synth.numeric");
            s.numeric.push_back(std::move(nf));
        }
    }
    if (j.contains("categorical")) {
        s.categorical.clear();
        for (const auto& f : j.at("categorical")) {
            check_keys(f, {"name", "levels", "offsets", "missing"}, "synth.categorical");
            CategoricalFeature cf;
            read(f, "name", cf.name, "synth.categorical");
            read(f, "levels", cf.levels, "synth.categorical");
            read(f, "offsets", cf.offsets, "synth.categorical");
            read(f, "missing", cf.missing, "synth.categorical");
            s.categorical.push_back(std::move(cf));
        }
    }
    if (j.contains("interactions")) {
        s.interactions.clear();
        for (const auto& f : j.at("interactions")) {
            check_keys(f, {"a", "b", "weight"}, "synth.interactions");
            Interaction in;
            read(f, "a", in.a, "synth.interactions");
            read(f, "b", in.b, "synth.interactions");
            read(f, "weight", in.weight, "synth.interactions");
            s.interactions.push_back(std::move(in));
        }
    }
    return s;
}

json synth_to_json(const SynthSpec& s) {
    json j = {{"n_wells", s.n_wells},           {"months", s.months},         {"seed", s.seed},
              {"decline_lo", s.decline_lo},     {"decline_hi", s.decline_hi}, {"monthly_noise", s.monthly_noise},
              {"intercept", s.intercept}};
    if (s.noise_fraction) {
        j["noise_fraction"] = *s.noise_fraction;
    } else {
        j["noise_std"] = s.noise_std;
    }
    j["numeric"] = json::array();
    for (const auto& f : s.numeric) {
        json nf = {{"name", f.name}, {"low", f.lo}, {"high", f.hi}, {"weight", f.weight}, {"missing", f.missing}};
        if (!f.collinear_with.empty()) {
            nf["collinear_with"] = f.collinear_with;
            nf["jitter"] = f.jitter;
        }
        j["numeric"].push_back(std::move(nf));
    }
    j["categorical"] = json::array();
    for (const auto& f : s.categorical) {
        j["categorical"].push_back(
            {{"name", f.name}, {"levels", f.levels}, {"offsets", f.offsets}, {"missing", f.missing}});
    }
    j["interactions"] = json::array();
    for (const auto& in : s.interactions) j["interactions"].push_back({{"a", in.a}, {"b", in.b}, {"weight", in.weight}});
    return j;
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
    if (path.empty() || base.empty() || std::filesystem::path(path).is_absolute()) return path;
    return (base / path).lexically_normal().string();
}

}  // namespace

void PipelineConfig::validate() const {
    if (input_path.empty() == !synth.has_value()) {
        throw std::invalid_argument("config: exactly one of 'input' and 'synth' must be given");
    }
    if (synth) synth->validate();
    if (response.empty()) throw std::invalid_argument("config: 'response' must not be empty");
    if (!(preprocess.missing_threshold > 0.0 && preprocess.missing_threshold <= 1.0)) {
        throw std::invalid_argument("config: missing_threshold must lie in (0, 1]");
    }
    if (!(preprocess.corr_cutoff > 0.0 && preprocess.corr_cutoff <= 1.0)) {
        throw std::invalid_argument("config: corr_cutoff must lie in (0, 1]");
    }
    if (preprocess.knn_k < 1) throw std::invalid_argument("config: knn_k must be >= 1");
    if (models.empty() && !lstm) throw std::invalid_argument("config: no models to train");
    std::set<ModelKind> kinds;
    for (const auto& m : models) {
        if (!kinds.insert(m.kind).second) {
            throw std::invalid_argument("config: model '" + std::string(to_string(m.kind)) + "' listed twice");
        }
        if (m.kind == ModelKind::RandomForest) {
            rf_params_from(m.params);
        } else {
            gbm_params_from(m.params).validate();
        }
        if (m.tune) {
            if (m.tune->n_trials < 1) throw std::invalid_argument("config: tune.n_trials must be >= 1");
            if (m.tune->folds < 2) throw std::invalid_argument("config: tune.folds must be >= 2");
        }
        if (m.space) m.space->validate();
    }
    if (lstm) {
        if (lstm->window < 1) throw std::invalid_argument("config: lstm.window must be >= 1");
        if (!synth && lstm->monthly_path.empty()) {
            throw std::invalid_argument("config: lstm needs 'monthly' when the input is a CSV file");
        }
        if (lstm->hyper.hidden.empty()) throw std::invalid_argument("config: lstm.hidden must not be empty");
        if (!(lstm->hyper.dropout >= 0.0 && lstm->hyper.dropout < 1.0)) {
            throw std::invalid_argument("config: lstm.dropout must lie in [0, 1)");
        }
        if (lstm->hyper.epochs < 1 || lstm->hyper.batch_size < 1) {
            throw std::invalid_argument("config: lstm.epochs and lstm.batch_size must be >= 1");
        }
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("config: test_fraction must lie in (0, 1)");
    }
    if (uncertainty.realizations == 1) throw std::invalid_argument("config: realizations must be 0 or >= 2");
    if (!(uncertainty.level > 0.0 && uncertainty.level < 1.0)) {
        throw std::invalid_argument("config: uncertainty.level must lie in (0, 1)");
    }
    if (out_dir.empty()) throw std::invalid_argument("config: 'out' must not be empty");
}

PipelineConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    check_keys(doc, {"input", "synth", "response", "id_column", "units", "preprocess", "models", "lstm",
                     "test_fraction", "uncertainty", "seed", "out"},
               "config");
    PipelineConfig c;
    read_seed(doc, "seed", c.seed, "config");
    read(doc, "input", c.input_path, "config");
    c.input_path = resolve(c.input_path, base_dir);
    if (doc.contains("synth")) c.synth = parse_synth(doc.at("synth"), c.seed);
    read(doc, "response", c.response, "config");
    read(doc, "id_column", c.id_column, "config");
    read(doc, "units", c.units, "config");
    read(doc, "test_fraction", c.test_fraction, "config");
    read(doc, "out", c.out_dir, "config");
    c.out_dir = resolve(c.out_dir, base_dir);

    if (doc.contains("preprocess")) {
        const json& p = doc.at("preprocess");
        check_keys(p, {"missing_threshold", "imputer", "knn_k", "iterative_rounds", "corr_cutoff", "encode", "drop"},
                   "preprocess");
        read(p, "missing_threshold", c.preprocess.missing_threshold, "preprocess");
        if (p.contains("imputer")) c.preprocess.imputer = imputer_from(p.at("imputer").get<std::string>());
        read_count(p, "knn_k", c.preprocess.knn_k, "preprocess");
        read_count(p, "iterative_rounds", c.preprocess.iterative_rounds, "preprocess");
        read(p, "corr_cutoff", c.preprocess.corr_cutoff, "preprocess");
        read(p, "encode", c.preprocess.encode, "preprocess");
        read(p, "drop", c.preprocess.drop, "preprocess");
    }

    if (doc.contains("models")) {
        const json& arr = doc.at("models");
        if (!arr.is_array()) throw std::invalid_argument("config: 'models' must be an array");
        for (const auto& m : arr) {
            check_keys(m, {"kind", "params", "tune", "space"}, "models entry");
            ModelConfig mc;
            mc.kind = model_kind_from_string(m.at("kind").get<std::string>());
            if (m.contains("params")) {
                const json& params = m.at("params");
                if (!params.is_object()) throw std::invalid_argument("config: model 'params' must be an object");
                for (const auto& [name, v] : params.items()) {
                    if (!v.is_number()) throw std::invalid_argument("config: parameter '" + name + "' must be a number");
                    mc.params[name] = v.get<double>();
                }
            }
            if (m.contains("tune")) {
                const json& t = m.at("tune");
                check_keys(t, {"n_trials", "folds"}, "tune");
                TuneConfig tc;
                read_count(t, "n_trials", tc.n_trials, "tune");
                read_count(t, "folds", tc.folds, "tune");
                mc.tune = tc;
            }
            if (m.contains("space")) mc.space = parse_space(m.at("space"));
            c.models.push_back(std::move(mc));
        }
    }

    if (doc.contains("lstm")) {
        const json& l = doc.at("lstm");
        check_keys(l, {"window", "hidden", "dropout", "learning_rate", "weight_decay", "epochs", "batch_size", "monthly",
                       "month_column", "rate_column"},
                   "lstm");
        LstmConfig lc;
        lc.hyper.seed = c.seed;
        read_count(l, "window", lc.window, "lstm");
        read(l, "hidden", lc.hyper.hidden, "lstm");
        read(l, "dropout", lc.hyper.dropout, "lstm");
        read(l, "learning_rate", lc.hyper.learning_rate, "lstm");
        read(l, "weight_decay", lc.hyper.weight_decay, "lstm");
        read_count(l, "epochs", lc.hyper.epochs, "lstm");
        read_count(l, "batch_size", lc.hyper.batch_size, "lstm");
        read(l, "monthly", lc.monthly_path, "lstm");
        lc.monthly_path = resolve(lc.monthly_path, base_dir);
        read(l, "month_column", lc.month_column, "lstm");
        read(l, "rate_column", lc.rate_column, "lstm");
        c.lstm = std::move(lc);
    }

    if (doc.contains("uncertainty")) {
        const json& u = doc.at("uncertainty");
        check_keys(u, {"realizations", "level", "n_estimators"}, "uncertainty");
        read_count(u, "realizations", c.uncertainty.realizations, "uncertainty");
        read(u, "level", c.uncertainty.level, "uncertainty");
        read_count(u, "n_estimators", c.uncertainty.n_estimators, "uncertainty");
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

json config_to_json(const PipelineConfig& c) {
    json j;
    if (c.synth) {
        j["synth"] = synth_to_json(*c.synth);
    } else {
        j["input"] = c.input_path;
    }
    j["response"] = c.response;
    j["id_column"] = c.id_column;
    j["units"] = c.units;
    j["preprocess"] = {{"missing_threshold", c.preprocess.missing_threshold},
                       {"imputer", imputer_name(c.preprocess.imputer)},
                       {"knn_k", c.preprocess.knn_k},
                       {"iterative_rounds", c.preprocess.iterative_rounds},
                       {"corr_cutoff", c.preprocess.corr_cutoff},
                       {"encode", c.preprocess.encode},
                       {"drop", c.preprocess.drop}};
    j["models"] = json::array();
    for (const auto& m : c.models) {
        json mj = {{"kind", to_string(m.kind)}, {"params", json::object()}};
        for (const auto& [name, v] : m.params) mj["params"][name] = v;
        if (m.tune) mj["tune"] = {{"n_trials", m.tune->n_trials}, {"folds", m.tune->folds}};
        if (m.space) mj["space"] = space_to_json(*m.space);
        j["models"].push_back(std::move(mj));
    }
    if (c.lstm) {
        const auto& l = *c.lstm;
        j["lstm"] = {{"window", l.window},
                     {"hidden", l.hyper.hidden},
                     {"dropout", l.hyper.dropout},
                     {"learning_rate", l.hyper.learning_rate},
                     {"weight_decay", l.hyper.weight_decay},
                     {"epochs", l.hyper.epochs},
                     {"batch_size", l.hyper.batch_size},
                     {"month_column", l.month_column},
                     {"rate_column", l.rate_column}};
        if (!l.monthly_path.empty()) j["lstm"]["monthly"] = l.monthly_path;
    }
    j["test_fraction"] = c.test_fraction;
    j["uncertainty"] = {{"realizations", c.uncertainty.realizations},
                        {"level", c.uncertainty.level},
                        {"n_estimators", c.uncertainty.n_estimators}};
    j["seed"] = c.seed;
    j["out"] = c.out_dir;
    return j;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

std::string config_hash(const PipelineConfig& config) {
    json j = config_to_json(config);
    // The output location does not change results.
    j.erase("out");
    return sha256_hex(j.dump());
}

std::string_view to_string(Stage stage) {
    switch (stage) {
    case Stage::Ingest: return "ingest";
    case Stage::Preprocess: return "preprocess";
    case Stage::Split: return "split";
    case Stage::Tune: return "tune";
    case Stage::Train: return "train";
    case Stage::Evaluate: return "evaluate";
    case Stage::Uncertainty: return "uncertainty";
    }
    return "unknown";
}

StageError::StageError(Stage stage, const std::string& message)
    : std::runtime_error(std::string(to_string(stage)) + ": " + message), stage_(stage) {}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

json versions() {
    return {{"wellml", kVersion},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}};
}

/// Everything later stages need, filled in stage by stage.
struct RunState {
    Table raw;
    std::vector<std::vector<double>> monthly;  // per raw row, if LSTM is configured
    Table processed;
    std::vector<std::string> features;
    std::vector<double> ids;
    Matrix X;
    std::vector<double> y;
    std::vector<std::size_t> train_rows, test_rows;
    std::map<ModelKind, Assignment> chosen;
    std::map<ModelKind, RfParams> rf;
    std::map<ModelKind, GbmParams> gbm;
    std::map<ModelKind, std::vector<double>> test_predictions;
    std::optional<SequenceDataset> sequences;
    std::vector<double> sequence_ids;
    std::optional<LstmTrainResult> lstm;
    json metrics = json::object();
    json preprocess_report = json::object();
};

std::vector<std::vector<double>> load_monthly(const LstmConfig& lc, const std::string& id_column,
                                              std::vector<double>& well_ids) {
    const Table t = load_csv(lc.monthly_path);
    const Column& id = t.column(id_column);
    const Column& month = t.column(lc.month_column);
    const Column& rate = t.column(lc.rate_column);
    for (const Column* c : {&id, &month, &rate}) {
        if (c->kind != ColumnKind::Numeric || c->missing_count() != 0) {
            throw std::runtime_error("monthly data: column '" + c->name + "' must be numeric and complete");
        }
    }
    std::map<double, std::vector<std::pair<double, double>>> by_well;
    for (std::size_t r = 0; r < t.n_rows(); ++r) by_well[id.values[r]].emplace_back(month.values[r], rate.values[r]);
    std::vector<std::vector<double>> out;
    for (auto& [well, rows] : by_well) {
        std::sort(rows.begin(), rows.end());
        std::vector<double> series;
        for (const auto& [m, q] : rows) series.push_back(q);
        well_ids.push_back(well);
        out.push_back(std::move(series));
    }
    return out;
}

void stage_ingest(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out) {
    if (cfg.synth) {
        SynthData data = generate(*cfg.synth);
        write_csv(data.table, out / "wells.csv");
        s.raw = std::move(data.table);
        if (cfg.lstm) {
            s.monthly = std::move(data.monthly);
            s.sequence_ids = s.raw.column(0).values;
        }
    } else {
        s.raw = load_csv(cfg.input_path);
        if (cfg.lstm) s.monthly = load_monthly(*cfg.lstm, cfg.id_column, s.sequence_ids);
    }
    if (!cfg.models.empty()) {
        const Column& resp = s.raw.column(cfg.response);
        if (resp.kind != ColumnKind::Numeric) {
            throw std::runtime_error("response column '" + cfg.response + "' is not numeric");
        }
    }
    json stats = json::array();
    for (const auto& c : column_stats(s.raw)) {
        json j = {{"name", c.name}, {"kind", to_string(c.kind)}, {"missing_fraction", c.missing_fraction}};
        if (c.mean) {
            j["mean"] = *c.mean;
            j["std"] = *c.std;
            j["min"] = *c.min;
            j["max"] = *c.max;
        }
        if (c.kind == ColumnKind::Categorical) j["cardinality"] = c.cardinality;
        stats.push_back(std::move(j));
    }
    s.metrics["columns"] = std::move(stats);
}

void stage_preprocess(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out) {
    if (cfg.models.empty()) return;
    Table t = drop_columns(s.raw, cfg.preprocess.drop);

    // Rows without a response cannot be used for fitting or scoring.
    const Column& resp = t.column(cfg.response);
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
        if (!resp.is_missing(r)) keep.push_back(r);
    }
    const std::size_t dropped_rows = t.n_rows() - keep.size();
    t = t.take_rows(keep);
    const bool has_id = t.has_column(cfg.id_column);
    if (has_id) {
        const Column& id = t.column(cfg.id_column);
        if (id.kind != ColumnKind::Numeric || id.missing_count() != 0) {
            throw std::runtime_error("id column '" + cfg.id_column + "' must be numeric and complete");
        }
    }

    const std::vector<std::string> reserved = has_id ? std::vector<std::string>{cfg.id_column, cfg.response}
                                                     : std::vector<std::string>{cfg.response};
    std::vector<std::string> too_sparse;
    for (const auto& c : column_stats(t)) {
        if (std::find(reserved.begin(), reserved.end(), c.name) != reserved.end()) continue;
        if (c.missing_fraction >= cfg.preprocess.missing_threshold) too_sparse.push_back(c.name);
    }
    t = drop_columns(t, too_sparse);

    t = one_hot_encode(t, cfg.preprocess.encode).table;
    for (const auto& c : t.columns()) {
        if (c.kind == ColumnKind::Categorical) {
            throw std::runtime_error("categorical column '" + c.name + "' is not in the encode list");
        }
    }

    switch (cfg.preprocess.imputer) {
    case ImputerKind::Knn:
        t = knn_impute(t, {cfg.preprocess.knn_k, reserved});
        break;
    case ImputerKind::Iterative: {
        IterativeImputeOptions o;
        o.max_rounds = cfg.preprocess.iterative_rounds;
        o.exclude = reserved;
        t = iterative_impute(t, o).table;
        break;
    }
    case ImputerKind::None:
        break;
    }

    std::vector<std::string> features;
    for (const auto& name : t.column_names()) {
        if (std::find(reserved.begin(), reserved.end(), name) == reserved.end()) features.push_back(name);
    }
    const Table feature_table = select_columns(t, features);
    const Table pruned = prune_collinear(feature_table, spearman_matrix(feature_table), cfg.preprocess.corr_cutoff);
    std::vector<std::string> collinear;
    for (const auto& name : features) {
        if (!pruned.has_column(name)) collinear.push_back(name);
    }
    t = drop_columns(t, collinear);
    s.features = pruned.column_names();
    if (s.features.empty()) throw std::runtime_error("no feature columns left after preprocessing");

    const std::size_t n = t.n_rows();
    s.X = Matrix(n, s.features.size());
    for (std::size_t j = 0; j < s.features.size(); ++j) {
        const Column& c = t.column(s.features[j]);
        if (c.missing_count() != 0) {
            throw std::runtime_error("feature '" + c.name + "' still has missing values (imputer is 'none')");
        }
        for (std::size_t r = 0; r < n; ++r) s.X(r, j) = c.values[r];
    }
    s.y = t.column(cfg.response).values;
    if (has_id) {
        s.ids = t.column(cfg.id_column).values;
    } else {
        s.ids.resize(n);
        std::iota(s.ids.begin(), s.ids.end(), 1.0);
    }
    s.processed = t;
    write_csv(t, out / "preprocessed.csv");
    s.preprocess_report = {{"rows_without_response", dropped_rows},
                           {"dropped_missing", too_sparse},
                           {"dropped_collinear", collinear},
                           {"features", s.features}};
}

void stage_split(const PipelineConfig& cfg, RunState& s) {
    if (!cfg.models.empty()) {
        SplitSpec spec;
        spec.fractions = {1.0 - cfg.test_fraction, cfg.test_fraction};
        spec.seed = cfg.seed;
        auto parts = split_indices(s.X.rows(), spec);
        s.train_rows = std::move(parts[0]);
        s.test_rows = std::move(parts[1]);
        if (s.train_rows.empty() || s.test_rows.empty()) throw std::runtime_error("split left an empty part");
    }
    if (cfg.lstm) {
        s.sequences = build_sequences(s.monthly, cfg.lstm->window);
        if (s.sequences->train.empty() || s.sequences->test.empty()) {
            throw std::runtime_error("monthly series too short for the LSTM window");
        }
    }
}

RfParams base_rf(const PipelineConfig& cfg) {
    RfParams p;
    p.seed = cfg.seed;
    return p;
}

GbmParams base_gbm(const PipelineConfig& cfg) {
    GbmParams p;
    p.seed = cfg.seed;
    return p;
}

void stage_tune(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out, std::size_t workers,
                const std::string& hash) {
    std::ofstream log;
    for (const auto& m : cfg.models) {
        Assignment chosen = m.params;
        if (m.tune) {
            if (!log.is_open()) {
                log.open(out / "study.jsonl", std::ios::binary | std::ios::trunc);
                if (!log) throw std::runtime_error("cannot open study.jsonl");
            }
            const SearchSpace space = m.space ? *m.space : default_space(m.kind);
            StudyOptions o;
            o.n_trials = m.tune->n_trials;
            o.folds = m.tune->folds;
            o.seed = cfg.seed;
            o.rf_base = rf_params_from(m.params, base_rf(cfg));
            o.gbm_base = gbm_params_from(m.params, base_gbm(cfg));
            o.workers = workers;
            const json extra = {{"model", to_string(m.kind)}, {"config_hash", hash}, {"seed", cfg.seed}};
            o.on_trial = [&](const Trial& t) { append_trial(log, t, space, extra); };
            const Matrix Xtr = s.X.take_rows(s.train_rows);
            const auto ytr = take<double>(s.y, s.train_rows);
            const Study study = run_study(m.kind, space, Xtr, ytr, o);
            const Trial* best = study.best();
            for (const auto& [name, v] : best->params) chosen[name] = v;
            std::size_t failed = 0;
            for (const auto& t : study.trials) failed += t.status == TrialStatus::Failed;
            s.metrics["tuning"][std::string(to_string(m.kind))] = {
                {"n_trials", study.trials.size()}, {"n_failed", failed}, {"best_trial", best->id},
                {"best_cv_mse", best->value}};
        }
        s.chosen[m.kind] = chosen;
        if (m.kind == ModelKind::RandomForest) {
            s.rf[m.kind] = rf_params_from(chosen, base_rf(cfg));
        } else {
            s.gbm[m.kind] = gbm_params_from(chosen, base_gbm(cfg));
            s.gbm[m.kind].validate();
        }
    }
}

json params_json(const Assignment& a) {
    json j = json::object();
    for (const auto& [name, v] : a) j[name] = v;
    return j;
}

void stage_train(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out, std::size_t workers) {
    const Matrix Xtr = s.X.take_rows(s.train_rows);
    const auto ytr = take<double>(s.y, s.train_rows);
    const Matrix Xte = s.X.take_rows(s.test_rows);
    for (const auto& m : cfg.models) {
        const std::string name(to_string(m.kind));
        if (m.kind == ModelKind::RandomForest) {
            const Forest f = fit_forest(Xtr, ytr, s.rf.at(m.kind), workers);
            write_text(out / ("model_" + name + ".json"), forest_to_json(f).dump());
            s.test_predictions[m.kind] = predict_forest(f, Xte);
        } else {
            const GbmEnsemble g = fit_gbm(Xtr, ytr, s.gbm.at(m.kind));
            write_text(out / ("model_" + name + ".json"), gbm_to_json(g).dump());
            s.test_predictions[m.kind] = predict_gbm(g, Xte);
        }
    }
    if (cfg.lstm) {
        s.lstm = train_lstm(*s.sequences, cfg.lstm->hyper);
        write_text(out / "model_lstm.json", lstm_to_json(s.lstm->net).dump());
        emit_validation_curve(s.lstm->train_loss, s.lstm->val_loss, out / "validation_curve_lstm.svg");
    }
}

void stage_evaluate(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out) {
    if (!cfg.models.empty()) {
        const auto ytr = take<double>(s.y, s.train_rows);
        const auto yte = take<double>(s.y, s.test_rows);
        const double train_mean = std::accumulate(ytr.begin(), ytr.end(), 0.0) / static_cast<double>(ytr.size());
        const std::vector<double> baseline(yte.size(), train_mean);
        s.metrics["baseline_mean"] = to_json(metrics(yte, baseline, cfg.units));

        std::vector<std::string> model_col;
        std::vector<double> id_col, actual_col, pred_col;
        for (const auto& m : cfg.models) {
            const std::string name(to_string(m.kind));
            const auto& pred = s.test_predictions.at(m.kind);
            json j = to_json(metrics(yte, pred, cfg.units));
            j["params"] = params_json(s.chosen.at(m.kind));
            s.metrics["models"][name] = std::move(j);
            for (std::size_t i = 0; i < yte.size(); ++i) {
                model_col.push_back(name);
                id_col.push_back(s.ids[s.test_rows[i]]);
                actual_col.push_back(yte[i]);
                pred_col.push_back(pred[i]);
            }
            ScatterStyle style;
            style.title = "Predicted vs actual (" + name + ")";
            style.units = cfg.units;
            emit_scatter(yte, pred, out / ("scatter_" + name + ".svg"), style);
        }
        std::vector<std::string> labels;
        std::vector<std::size_t> codes;
        for (const auto& name : model_col) {
            auto it = std::find(labels.begin(), labels.end(), name);
            if (it == labels.end()) it = labels.insert(labels.end(), name);
            codes.push_back(static_cast<std::size_t>(it - labels.begin()));
        }
        Table p(model_col.size());
        p.add_categorical("model", std::move(codes), {}, std::move(labels));
        p.add_numeric(cfg.id_column, std::move(id_col));
        p.add_numeric("actual", std::move(actual_col));
        p.add_numeric("predicted", std::move(pred_col));
        write_csv(p, out / "predictions.csv");
    }

    if (cfg.lstm) {
        const SequenceDataset& d = *s.sequences;
        std::vector<double> actual, pred, persistence, ids, months;
        for (const auto& w : d.test) {
            actual.push_back(d.to_raw(w.target));
            pred.push_back(d.to_raw(predict_lstm(s.lstm->net, w.inputs)));
            persistence.push_back(d.to_raw(w.inputs.back()));
            ids.push_back(s.sequence_ids.at(w.well));
            months.push_back(static_cast<double>(w.target_month + 1));
        }
        json j = to_json(metrics(actual, pred, cfg.units));
        j["persistence_baseline"] = to_json(metrics(actual, persistence, cfg.units));
        j["train_loss"] = s.lstm->train_loss;
        j["val_loss"] = s.lstm->val_loss;
        j["skipped_wells"] = d.skipped_wells.size();
        s.metrics["lstm"] = std::move(j);
        ScatterStyle style;
        style.title = "Predicted vs actual monthly rate (lstm)";
        style.units = cfg.units + " per month";
        emit_scatter(actual, pred, out / "scatter_lstm.svg", style);
        Table t(actual.size());
        t.add_numeric(cfg.id_column, std::move(ids));
        t.add_numeric("month", std::move(months));
        t.add_numeric("actual", std::move(actual));
        t.add_numeric("predicted", std::move(pred));
        write_csv(t, out / "lstm_predictions.csv");
    }
}

json stage_uncertainty(const PipelineConfig& cfg, RunState& s, const std::filesystem::path& out, std::size_t workers) {
    json doc = json::object();
    if (cfg.uncertainty.realizations == 0 || cfg.models.empty()) return doc;
    for (const auto& m : cfg.models) {
        const std::string name(to_string(m.kind));
        RfParams rf = s.rf.count(m.kind) ? s.rf.at(m.kind) : base_rf(cfg);
        GbmParams gbm = s.gbm.count(m.kind) ? s.gbm.at(m.kind) : base_gbm(cfg);
        if (cfg.uncertainty.n_estimators > 0) {
            rf.n_estimators = cfg.uncertainty.n_estimators;
            gbm.n_estimators = cfg.uncertainty.n_estimators;
        }
        RealizationOptions o;
        o.n_realizations = cfg.uncertainty.realizations;
        o.master_seed = cfg.seed;
        o.split.fractions = {1.0 - cfg.test_fraction, cfg.test_fraction};
        o.level = cfg.uncertainty.level;
        o.workers = workers;
        const UncertaintyReport r = realizations(make_trainer(m.kind, rf, gbm, 1), s.X, s.y, o);
        emit_histogram(r.rmses, {r.ci_lo, r.ci_hi}, out / ("uncertainty_" + name + ".svg"), cfg.units);
        doc[name] = to_json(r);
        s.metrics["uncertainty"][name] = {
            {"mean_rmse", r.mean}, {"ci_lo", r.ci_lo}, {"ci_hi", r.ci_hi}, {"n_failed", r.n_failed}};
    }
    return doc;
}

}  // namespace

RunSummary run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    config.validate();
    const std::filesystem::path out = config.out_dir;
    std::filesystem::create_directories(out);
    std::filesystem::remove(out / "FAILED");
    const std::string hash = config_hash(config);
    const json provenance = {{"config_hash", hash}, {"seed", config.seed}, {"versions", versions()}};
    write_text(out / "config.json", config_to_json(config).dump(2) + "\n");

    RunSummary summary;
    summary.out_dir = out;
    RunState s;
    Stage current = Stage::Ingest;
    const auto run = [&](Stage stage, auto&& body) {
        if (static_cast<int>(stage) > static_cast<int>(options.stop_after)) return;
        current = stage;
        body();
        summary.completed.push_back(stage);
    };
    try {
        run(Stage::Ingest, [&] { stage_ingest(config, s, out); });
        run(Stage::Preprocess, [&] { stage_preprocess(config, s, out); });
        run(Stage::Split, [&] { stage_split(config, s); });
        run(Stage::Tune, [&] { stage_tune(config, s, out, options.workers, hash); });
        run(Stage::Train, [&] { stage_train(config, s, out, options.workers); });
        run(Stage::Evaluate, [&] { stage_evaluate(config, s, out); });
        run(Stage::Uncertainty, [&] {
            json doc = stage_uncertainty(config, s, out, options.workers);
            if (!doc.empty()) {
                json full = provenance;
                full["models"] = std::move(doc);
                write_text(out / "uncertainty.json", full.dump(2) + "\n");
            }
        });
    } catch (const std::exception& e) {
        const StageError err(current, e.what());
        write_text(out / "FAILED", std::string(err.what()) + "\n");
        throw err;
    }

    json metrics = provenance;
    metrics["format"] = "wellml.metrics";
    metrics["timestamp"] = options.timestamp.empty() ? utc_now() : options.timestamp;
    json stages = json::array();
    for (Stage st : summary.completed) stages.push_back(to_string(st));
    metrics["stages_completed"] = std::move(stages);
    if (!s.preprocess_report.empty()) metrics["preprocess"] = s.preprocess_report;
    for (auto& [key, value] : s.metrics.items()) metrics[key] = value;
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    summary.metrics = std::move(metrics);
    return summary;
}

}  // namespace wellml
