#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "wellml/data_core.hpp"
#include "wellml/pipeline.hpp"
#include "wellml/report.hpp"
#include "wellml/synth_data.hpp"

namespace {

using namespace wellml;

struct PipelineFlags {
    std::string config;
    std::size_t workers = 1;
    std::optional<std::uint64_t> seed;
    std::string out;
};

PipelineConfig resolve_config(const PipelineFlags& f) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text(f.config));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config: '" + f.config + "' is not valid JSON: " + e.what());
    }
    if (f.seed) doc["seed"] = *f.seed;
    PipelineConfig c = parse_config(doc, std::filesystem::path(f.config).parent_path());
    if (!f.out.empty()) c.out_dir = f.out;
    return c;
}

void add_pipeline_command(CLI::App& app, const std::string& name, const std::string& help, Stage stop,
                          PipelineFlags& flags, std::optional<Stage>& chosen) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", flags.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--workers", flags.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", flags.seed, "Override the config's master seed");
    cmd->add_option("--out", flags.out, "Output directory (overrides the config)");
    cmd->callback([&chosen, stop] { chosen = stop; });
}

int run_stages(const PipelineFlags& flags, Stage stop) {
    const PipelineConfig config = resolve_config(flags);
    RunOptions o;
    o.stop_after = stop;
    o.workers = flags.workers;
    const RunSummary s = run_pipeline(config, o);
    std::cout << "completed:";
    for (Stage st : s.completed) std::cout << ' ' << to_string(st);
    std::cout << "\noutputs in " << s.out_dir.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Well production regression toolkit"};
    app.require_subcommand(1);

    PipelineFlags flags;
    std::optional<Stage> stop;
    add_pipeline_command(app, "run", "Run all stages", Stage::Uncertainty, flags, stop);
    add_pipeline_command(app, "ingest", "Load the input and report column statistics", Stage::Ingest, flags, stop);
    add_pipeline_command(app, "preprocess", "Run through preprocessing", Stage::Preprocess, flags, stop);
    add_pipeline_command(app, "tune", "Run through hyperparameter tuning", Stage::Tune, flags, stop);
    add_pipeline_command(app, "train", "Run through model training", Stage::Train, flags, stop);
    add_pipeline_command(app, "evaluate", "Run through test-set evaluation", Stage::Evaluate, flags, stop);
    add_pipeline_command(app, "uncertainty", "Run through the realization study (same as run)", Stage::Uncertainty,
                         flags, stop);

    std::size_t n_wells = 1000;
    double noise_fraction = 0.1;
    std::uint64_t gen_seed = 121;
    std::size_t months = 24;
    std::string gen_out = ".";
    auto* gen = app.add_subcommand("generate", "Write a synthetic well dataset");
    gen->add_option("--n-wells", n_wells, "Number of wells")->check(CLI::PositiveNumber);
    gen->add_option("--noise-fraction", noise_fraction, "Noise std as a fraction of the signal std");
    gen->add_option("--months", months, "Months of production history");
    gen->add_option("--seed", gen_seed, "Seed");
    gen->add_option("--out", gen_out, "Output directory");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Re-render figures from their CSV sidecars");
    report->add_option("--out", report_dir, "Artifact directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (stop) return run_stages(flags, *stop);
        if (gen->parsed()) {
            SynthSpec spec = SynthSpec::benchmark(n_wells, noise_fraction, gen_seed);
            spec.months = months;
            const SynthData data = generate(spec);
            std::filesystem::create_directories(gen_out);
            write_csv(data.table, std::filesystem::path(gen_out) / "wells.csv");
            write_csv(monthly_table(data), std::filesystem::path(gen_out) / "monthly.csv");
            std::cout << "wrote wells.csv and monthly.csv to " << gen_out << '\n';
            return 0;
        }
        if (report->parsed()) {
            std::cout << "re-rendered " << regenerate_figures(report_dir) << " figures\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
