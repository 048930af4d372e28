#include "homlab/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>

namespace homlab {

namespace {

constexpr int kExitConfig = 2;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
    bool strict = false;
};

void add_common(CLI::App* cmd, Flags& f, bool need_config) {
    auto* opt = cmd->add_option("--config", f.config, "experiment configuration (INI)");
    if (need_config) opt->required();
    cmd->add_option("--seed", f.seed, "override [experiment] seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--threads", f.threads, "worker threads");
    cmd->add_flag("--strict", f.strict, "treat resolution warnings as errors");
}

/// Loads the configuration and applies command-line overrides; prints parse
/// diagnostics and returns nullopt on failure.
std::optional<ExperimentConfig> load(const Flags& f, std::map<std::string, int>& lines) {
    ParsedConfig parsed = load_config(f.config);
    for (const auto& d : parsed.diagnostics) std::cerr << format(d, f.config) << "\n";
    if (!parsed.ok()) return std::nullopt;
    lines = parsed.lines;
    ExperimentConfig c = parsed.config;
    if (f.seed) c.seed = *f.seed;
    if (f.out) c.out = *f.out;
    if (f.threads) c.threads = *f.threads;
    if (f.strict) c.strict = true;
    return c;
}

void print_diagnostics(const ValidationReport& rep, const std::map<std::string, int>& lines, const std::string& src) {
    for (auto d : rep.diagnostics) {
        if (const auto it = lines.find(d.key); it != lines.end()) d.line = it->second;
        std::cerr << format(d, src) << "\n";
    }
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"homlab: stochastic homogenization and perforated-domain MsFEM experiments"};
    app.require_subcommand(1);
    Flags run_flags, validate_flags;
    std::string plot_dir;
    auto* run_cmd = app.add_subcommand("run", "execute an experiment and write its archive");
    add_common(run_cmd, run_flags, true);
    auto* validate_cmd = app.add_subcommand("validate", "check a configuration and estimate its cost");
    add_common(validate_cmd, validate_flags, true);
    auto* plot_cmd = app.add_subcommand("plot", "regenerate SVG plots from the CSV files of an archive");
    plot_cmd->add_option("--out", plot_dir, "archive directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (*validate_cmd) {
        std::map<std::string, int> lines;
        const auto c = load(validate_flags, lines);
        if (!c) return kExitConfig;
        const ValidationReport rep = validate(*c);
        print_diagnostics(rep, lines, validate_flags.config);
        std::cout << "experiment: " << to_string(c->kind) << "\n"
                  << "estimated solves: " << std::llround(rep.estimated_solves) << "\n"
                  << "estimated memory: " << std::llround(rep.estimated_memory_mb) << " MB\n"
                  << (rep.ok() ? "configuration is valid" : "configuration has errors") << "\n";
        return rep.ok() ? 0 : kExitConfig;
    }

    if (*run_cmd) {
        std::map<std::string, int> lines;
        const auto c = load(run_flags, lines);
        if (!c) return kExitConfig;
        const ValidationReport rep = validate(*c);
        print_diagnostics(rep, lines, run_flags.config);
        if (!rep.ok()) return kExitConfig;
        const RunArchive ar = run(*c, c->out, &std::cerr);
        for (const auto& w : ar.warnings) std::cerr << "warning: " << w << "\n";
        if (!ar.error.empty()) std::cerr << "error: " << ar.error << "\n";
        std::cout << (ar.complete ? "complete" : "failed") << ": " << ar.dir.string() << " (" << ar.files.size()
                  << " files)\n";
        return ar.exit_code;
    }

    try {
        for (const auto& name : regenerate_plots(plot_dir)) std::cout << "wrote " << name << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}

}  // namespace homlab
