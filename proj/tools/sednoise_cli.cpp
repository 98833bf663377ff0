#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sednoise/experiment.hpp"

namespace {

struct Flags {
    std::string config;
    bool force = false;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    std::string output;
};

void add_flags(CLI::App* cmd, Flags& f, bool config_required) {
    auto* c = cmd->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    if (config_required) c->required();
    cmd->add_flag("--force", f.force, "Recompute outputs that are already up to date");
    cmd->add_option("--jobs", f.jobs, "Maximum number of worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Base seed, overrides train.seed");
    cmd->add_option("--output", f.output, "Output directory, overrides output_dir");
}

sednoise::CommandOptions options(const Flags& f, const CLI::App* cmd) {
    sednoise::CommandOptions o;
    o.jobs = f.jobs;
    o.force = f.force;
    if (cmd->count("--seed")) o.seed = f.seed;
    if (cmd->count("--output")) o.output_dir = f.output;
    return o;
}

sednoise::ExperimentConfig load(const Flags& f, const sednoise::CommandOptions& o) {
    auto cfg = sednoise::load_experiment_config(f.config);
    sednoise::apply_overrides(cfg, o);
    return cfg;
}

int run_features(const Flags& f, const CLI::App* cmd) {
    const auto o = options(f, cmd);
    const auto s = sednoise::cmd_features(load(f, o), o);
    std::cout << "features: " << s.computed << " computed, " << s.skipped << " up to date, " << s.errors.size()
              << " failed\n";
    for (const auto& e : s.errors) std::cerr << "error: " << e << "\n";
    return s.errors.empty() ? 0 : static_cast<int>(sednoise::ErrorKind::Data);
}

int run_synth(const Flags& f, const CLI::App* cmd) {
    const auto o = options(f, cmd);
    const auto cfg = load(f, o);
    const auto s = sednoise::cmd_synth_data(cfg);
    std::cout << "synth-data: " << s.clips << " clips, " << s.distractors << " distractors written to "
              << cfg.output_dir << "\n";
    return 0;
}

int run_inject(const Flags& f, const CLI::App* cmd) {
    const auto o = options(f, cmd);
    const auto s = sednoise::cmd_inject(load(f, o));
    std::cout << "inject-noise: " << s.corrupted_records << " noisy records processed\n";
    if (s.corrupted_records) std::cout << sednoise::format_noise_report(s.report);
    return 0;
}

int run_run(const Flags& f, const CLI::App* cmd) {
    const auto o = options(f, cmd);
    const auto reports = sednoise::cmd_run(load(f, o), o);
    std::cout << sednoise::format_report_table(sednoise::to_rows(reports));
    return 0;
}

int run_report(const Flags& f, const CLI::App* cmd) {
    const auto o = options(f, cmd);
    std::string dir;
    if (o.output_dir) {
        dir = *o.output_dir;
    } else if (!f.config.empty()) {
        dir = load(f, o).output_dir;
    } else {
        throw sednoise::ConfigError("report: pass --config or --output");
    }
    const auto path = (std::filesystem::path(dir) / "report.csv").string();
    if (!std::filesystem::exists(path)) throw sednoise::DataError("report: " + path + " not found");
    std::cout << sednoise::format_report_table(sednoise::parse_report_csv(path));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sound event classification under label noise"};
    app.require_subcommand(1);
    Flags f;
    auto* features = app.add_subcommand("features", "Compute log-mel caches for every clip");
    auto* synth = app.add_subcommand("synth-data", "Write a synthetic dataset with a distractor pool");
    auto* inject = app.add_subcommand("inject-noise", "Corrupt noisy-origin labels and audio");
    auto* run = app.add_subcommand("run", "Train and evaluate every subset and loss in the config");
    auto* report = app.add_subcommand("report", "Print the accuracy table of a finished run");
    for (auto* c : {features, synth, inject, run}) add_flags(c, f, true);
    add_flags(report, f, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(sednoise::ErrorKind::Config);
    }

    try {
        if (*features) return run_features(f, features);
        if (*synth) return run_synth(f, synth);
        if (*inject) return run_inject(f, inject);
        if (*run) return run_run(f, run);
        if (*report) return run_report(f, report);
    } catch (const sednoise::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(sednoise::ErrorKind::Data);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(sednoise::ErrorKind::Data);
    }
    return 0;
}
