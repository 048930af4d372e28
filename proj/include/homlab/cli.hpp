#pragma once

#include "homlab/estimators.hpp"
#include "homlab/field_sampler.hpp"
#include "homlab/msfem.hpp"
#include "homlab/perforations.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace homlab {

enum class ExperimentKind { Homogenize, VrCompare, Msfem, MsfemRobustness };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& name);

/// fine_n = 0 selects the default resolution rule, -1 aligns every element
/// grid with the reference grid (fine_n = reference_n / k).
inline constexpr int kFineAuto = 0;
inline constexpr int kFineAligned = -1;

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::VrCompare;
    std::uint64_t seed = 1;
    int threads = 1;
    bool strict = false;
    std::string out = "results";

    // [law]
    FieldLaw law = FieldLaw::checkerboard(3.0, 20.0);

    // [homogenization]
    std::vector<int> ns{5, 10, 20};
    int r = 8;
    std::size_t m = 100;
    std::vector<Strategy> strategies{Strategy::MC, Strategy::Antithetic};
    std::size_t pool = 2000;
    int n_big = 0;
    double tol = 1e-9;

    // [geometry]
    PerforationSpec geometry;

    // [msfem]
    std::vector<double> Hs{0.125};
    std::vector<MsMethod> methods{MsMethod::CrouzeixRaviart, MsMethod::MsFEMLinear};
    std::vector<bool> bubbles{true};
    std::string rhs = "one";
    int reference_n = 512;
    int fine_n = kFineAuto;
    double kappa_scale = 1e8;
    bool heatmap = false;
};

struct Diagnostic {
    /// "section.key", or empty for file-level problems.
    std::string key;
    /// 1-based line in the source text, 0 when unknown.
    int line = 0;
    std::string message;
    bool error = true;
};

std::string format(const Diagnostic& d, const std::string& source);

struct ParsedConfig {
    ExperimentConfig config;
    std::vector<Diagnostic> diagnostics;
    /// Source line of every "section.key" present in the text.
    std::map<std::string, int> lines;
    bool ok() const;
};

/// Parses INI text. Unknown sections or keys and malformed values become
/// error diagnostics; keys that are absent keep their defaults.
ParsedConfig parse_config(const std::string& text);
ParsedConfig load_config(const std::filesystem::path& path);

/// Canonical INI text with every parameter written out.
std::string render_config(const ExperimentConfig& c);

struct ValidationReport {
    std::vector<Diagnostic> diagnostics;
    double estimated_solves = 0.0;
    double estimated_memory_mb = 0.0;
    bool ok() const;
};

/// Local grid resolution used for one coarse mesh, after auto/aligned resolution.
int effective_fine_n(const ExperimentConfig& c, const CoarseMesh& mesh, const PerforationSet& perf);
/// Geometries swept by the experiment: the configured one, or both disc lattices for msfem-robustness.
std::vector<PerforationSpec> experiment_geometries(const ExperimentConfig& c);

/// Static checks only; no solves. Resolution problems are warnings, or errors in strict mode.
ValidationReport validate(const ExperimentConfig& c);

struct RunArchive {
    std::filesystem::path dir;
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    bool complete = false;
    std::string error;
    /// 0 success, 2 configuration error, 3 solver error.
    int exit_code = 0;
};

/// Executes the sweep into dir and writes config.ini, CSV files, SVG plots and
/// manifest.json. Solver errors flush the rows finished so far and mark the
/// manifest as failed. Progress goes to log when given.
RunArchive run(const ExperimentConfig& c, const std::filesystem::path& dir, std::ostream* log = nullptr);

/// Rewrites every SVG derivable from the CSV files in dir; returns the files written.
std::vector<std::string> regenerate_plots(const std::filesystem::path& dir);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Entry point of the command-line tool.
int cli_main(int argc, char** argv);

}  // namespace homlab
