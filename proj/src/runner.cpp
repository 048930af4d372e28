#include "homlab/cli.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#ifndef HOMLAB_VERSION
#define HOMLAB_VERSION "0.0.0"
#endif

namespace homlab {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

namespace {

bool is_archive_file(const std::string& name) {
    static const char* fixed[] = {"manifest.json", "config.ini",   "estimates.csv", "comparison.csv",
                                  "msfem.csv",     "robustness.csv", "msfem_l2.svg", "msfem_h1.svg"};
    if (std::find(std::begin(fixed), std::end(fixed), name) != std::end(fixed)) return true;
    const auto ext = fs::path(name).extension().string();
    if (ext != ".csv" && ext != ".svg") return false;
    return name.rfind("field_", 0) == 0 || name.rfind("perforations", 0) == 0 || name.rfind("estimates_", 0) == 0;
}

/// Archive writer: every file goes through here, one at a time.
class Archive {
public:
    explicit Archive(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& text) {
        std::ofstream out(dir_ / name, std::ios::binary);
        out << text;
        if (!out) throw ParameterError("cannot write " + (dir_ / name).string());
        add(name);
    }
    void add(const std::string& name) {
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }
    const std::vector<std::string>& files() const { return files_; }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

std::uint64_t strategy_salt(Strategy s) { return 0x5eed0000ULL + static_cast<std::uint64_t>(s); }

struct Results {
    std::vector<EstimatorReport> reports;
    std::vector<ComparisonTable> tables;
    std::vector<MsFEMRow> rows;
    /// Rows per geometry, for the robustness summary.
    std::vector<std::vector<MsFEMRow>> by_geometry;
    nlohmann::ordered_json invariants = nlohmann::ordered_json::array();
    std::vector<std::string> fallbacks;
};

void run_homogenization(const ExperimentConfig& c, Results& res, std::ostream* log) {
    EstimatorOptions opts;
    opts.solver.tol = c.tol;
    opts.threads = c.threads;
    const std::vector<Strategy> strategies =
        c.kind == ExperimentKind::Homogenize ? std::vector<Strategy>{Strategy::MC} : c.strategies;
    const bool cv2 = std::find(strategies.begin(), strategies.end(), Strategy::ControlVariate2) != strategies.end();
    for (int n : c.ns) {
        std::optional<DefectCoefficients> defects;
        std::optional<SqsAuxiliary> aux;
        std::vector<EstimatorReport> at_n;
        for (Strategy s : strategies) {
            if (log) *log << "n = " << n << ": " << to_string(s) << std::endl;
            const std::uint64_t seed = sample_key(c.seed, static_cast<std::uint64_t>(n), strategy_salt(s));
            EstimatorReport rep;
            switch (s) {
                case Strategy::MC: rep = mc_estimate(c.law, n, c.r, c.m, seed, opts); break;
                case Strategy::Antithetic: rep = antithetic_estimate(c.law, n, c.r, c.m, seed, opts); break;
                case Strategy::ControlVariate1:
                case Strategy::ControlVariate2: {
                    if (!defects) defects = defect_coefficients(c.law, n, c.r, cv2 ? 2 : 1, opts.solver);
                    rep = control_variate_estimate(c.law, n, c.r, c.m, s == Strategy::ControlVariate1 ? 1 : 2,
                                                   seed, *defects, opts);
                    break;
                }
                case Strategy::SQS1:
                case Strategy::SQS2: {
                    if (!aux) {
                        const auto dec = sqs_decomposition(c.law);
                        aux = sqs_auxiliary(dec.c0, dec.c1, n, c.r, dec.p, opts.solver, c.n_big);
                    }
                    rep = sqs_estimate(c.law, n, c.r, c.m, seed, s == Strategy::SQS1 ? SqsMode::Exact1 : SqsMode::Ranked2,
                                       c.pool, *aux, opts);
                    break;
                }
            }
            for (const auto& w : rep.warnings)
                res.fallbacks.push_back("n=" + std::to_string(n) + " " + to_string(s) + ": " + w);
            if (rep.voigt_reuss_violations > 0)
                res.fallbacks.push_back("n=" + std::to_string(n) + " " + to_string(s) + ": " +
                                        std::to_string(rep.voigt_reuss_violations) +
                                        " realizations outside the Voigt-Reuss bounds");
            at_n.push_back(rep);
            res.reports.push_back(std::move(rep));
        }
        if (c.kind == ExperimentKind::VrCompare) res.tables.push_back(compare_strategies(at_n));
    }
}

constexpr int kHeatmapSamples = 128;

std::string field_csv(const ElementFields& u) {
    std::ostringstream os;
    os << std::setprecision(10) << "x,y,u\n";
    for (int j = 0; j < kHeatmapSamples; ++j)
        for (int i = 0; i < kHeatmapSamples; ++i) {
            const double x = (i + 0.5) / kHeatmapSamples, y = (j + 0.5) / kHeatmapSamples;
            os << x << ',' << y << ',' << field_value(u, x, y) << '\n';
        }
    return os.str();
}

std::string perforation_csv(const PerforationSet& perf) {
    std::ostringstream os;
    os << std::setprecision(10) << "x,y,inside\n";
    for (int j = 0; j < kHeatmapSamples; ++j)
        for (int i = 0; i < kHeatmapSamples; ++i) {
            const double x = (i + 0.5) / kHeatmapSamples, y = (j + 0.5) / kHeatmapSamples;
            os << x << ',' << y << ',' << (perf.contains(x, y) ? 1 : 0) << '\n';
        }
    return os.str();
}

void run_msfem(const ExperimentConfig& c, Results& res, Archive& archive, std::ostream* log) {
    const Source f = named_source(c.rhs);
    const auto specs = experiment_geometries(c);
    for (std::size_t g = 0; g < specs.size(); ++g) {
        const PerforationSet perf = build_perforations(specs[g]);
        const std::string suffix = specs.size() > 1 ? "_g" + std::to_string(g + 1) : "";
        if (c.heatmap) archive.write("perforations" + suffix + ".csv", perforation_csv(perf));
        if (log) *log << "reference solve " << perf.describe() << " at " << c.reference_n << "^2" << std::endl;
        const double nref = c.reference_n;
        const FineSolution ref = reference_solve(perf, f, c.reference_n, c.kappa_scale * nref * nref, c.strict);
        for (const auto& w : ref.warnings) res.fallbacks.push_back("reference grid: " + w);
        res.by_geometry.emplace_back();
        for (double H : c.Hs) {
            const CoarseMesh mesh = CoarseMesh::uniform(H);
            const int k = mesh.k();
            const int fine = effective_fine_n(c, mesh, perf);
            const double nloc = static_cast<double>(k) * fine;
            const double kappa = c.kappa_scale * nloc * nloc;
            for (MsMethod method : c.methods)
                for (bool bubbles : c.bubbles) {
                    if (log)
                        *log << "H = 1/" << k << " " << to_string(method) << (bubbles ? " + bubbles" : "") << std::endl;
                    CoarseSolution sol;
                    std::vector<std::string> warnings;
                    if (method == MsMethod::CrouzeixRaviart) {
                        const MsFEMSpace space = build_cr_space(mesh, perf, fine, kappa, bubbles, c.threads);
                        warnings = space.warnings;
                        sol = msfem_solve(space, f);
                    } else {
                        sol = baseline_solve(mesh, perf, f, method, bubbles, fine, kappa, c.threads);
                    }
                    const std::string tag = "H=1/" + std::to_string(k) + " " + to_string(method) +
                                            (bubbles ? "+bubbles" : "");
                    for (const auto& w : warnings) res.fallbacks.push_back(tag + ": " + w);
                    MsFEMRow row{to_string(method), H, perf.describe(), bubbles, compute_errors(sol, ref), sol.dofs,
                                 sol.solves};
                    res.rows.push_back(row);
                    res.by_geometry.back().push_back(row);
                    nlohmann::ordered_json inv;
                    inv["geometry"] = perf.describe();
                    inv["method"] = to_string(method);
                    inv["H"] = H;
                    inv["with_bubbles"] = bubbles;
                    inv["fine_n"] = fine;
                    inv["galerkin_residual"] = sol.galerkin_residual;
                    inv["mean_jump_defect"] = mean_jump_defect(sol.field);
                    res.invariants.push_back(inv);
                    if (c.heatmap)
                        archive.write("field_" + to_string(method) + "_H" + std::to_string(k) + "_b" +
                                          (bubbles ? "1" : "0") + suffix + ".csv",
                                      field_csv(sol.field));
                }
        }
    }
}

std::string robustness_csv(const Results& res) {
    std::ostringstream os;
    os << std::setprecision(10)
       << "method,H,with_bubbles,l2_test1,l2_test2,l2_degradation,h1_test1,h1_test2,h1_degradation\n";
    if (res.by_geometry.size() < 2) return os.str();
    for (const auto& a : res.by_geometry[0])
        for (const auto& b : res.by_geometry[1])
            if (a.method == b.method && a.H == b.H && a.with_bubbles == b.with_bubbles)
                os << a.method << ',' << a.H << ',' << (a.with_bubbles ? 1 : 0) << ',' << a.errors.l2_rel << ','
                   << b.errors.l2_rel << ',' << b.errors.l2_rel - a.errors.l2_rel << ',' << a.errors.h1_rel << ','
                   << b.errors.h1_rel << ',' << b.errors.h1_rel - a.errors.h1_rel << '\n';
    return os.str();
}

void flush(const ExperimentConfig& c, const Results& res, Archive& archive) {
    if (c.kind == ExperimentKind::Homogenize || c.kind == ExperimentKind::VrCompare) {
        std::ostringstream est;
        write_estimator_csv(est, res.reports);
        archive.write("estimates.csv", est.str());
        if (c.kind == ExperimentKind::VrCompare) {
            std::ostringstream cmp;
            write_comparison_csv(cmp, res.tables);
            archive.write("comparison.csv", cmp.str());
        }
    } else {
        std::ostringstream rows;
        write_msfem_csv(rows, res.rows);
        archive.write("msfem.csv", rows.str());
        if (c.kind == ExperimentKind::MsfemRobustness) archive.write("robustness.csv", robustness_csv(res));
    }
    for (const auto& name : regenerate_plots(archive.dir())) archive.add(name);
}

void write_manifest(const ExperimentConfig& c, const RunArchive& ar, const Results& res, Archive& archive) {
    nlohmann::ordered_json m;
    m["tool"] = "homlab";
    m["version"] = HOMLAB_VERSION;
    m["kind"] = to_string(c.kind);
    m["seed"] = c.seed;
    m["threads"] = c.threads;
    m["status"] = ar.complete ? "complete" : "failed";
    m["error"] = ar.error;
    auto files = nlohmann::ordered_json::array();
    std::vector<std::string> names = archive.files();
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
        nlohmann::ordered_json f;
        f["name"] = name;
        f["sha256"] = sha256_file(archive.dir() / name);
        f["bytes"] = fs::file_size(archive.dir() / name);
        files.push_back(f);
    }
    m["files"] = files;
    m["warnings"] = ar.warnings;
    m["fallbacks"] = res.fallbacks;
    if (!res.invariants.empty()) m["invariants"] = res.invariants;
    std::ofstream out(archive.dir() / "manifest.json", std::ios::binary);
    out << m.dump(2) << '\n';
}

}  // namespace

RunArchive run(const ExperimentConfig& c, const fs::path& dir, std::ostream* log) {
    RunArchive ar;
    ar.dir = dir;
    const ValidationReport v = validate(c);
    for (const auto& d : v.diagnostics) {
        if (d.error) {
            if (ar.error.empty()) ar.error = format(d, "config");
        } else {
            ar.warnings.push_back(format(d, "config"));
        }
    }
    if (!v.ok()) {
        ar.exit_code = 2;
        return ar;
    }
    try {
        fs::create_directories(dir);
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && is_archive_file(e.path().filename().string())) fs::remove(e.path());
    } catch (const fs::filesystem_error& e) {
        ar.exit_code = 2;
        ar.error = e.what();
        return ar;
    }

    Archive archive(dir);
    Results res;
    archive.write("config.ini", render_config(c));
    try {
        if (c.kind == ExperimentKind::Homogenize || c.kind == ExperimentKind::VrCompare)
            run_homogenization(c, res, log);
        else
            run_msfem(c, res, archive, log);
        ar.complete = true;
    } catch (const SolverError& e) {
        ar.error = e.what();
        ar.exit_code = 3;
    } catch (const Error& e) {
        ar.error = e.what();
        ar.exit_code = 2;
    } catch (const std::exception& e) {
        ar.error = e.what();
        ar.exit_code = 3;
    }
    flush(c, res, archive);
    write_manifest(c, ar, res, archive);
    archive.add("manifest.json");
    ar.files = archive.files();
    ar.warnings.insert(ar.warnings.end(), res.fallbacks.begin(), res.fallbacks.end());
    return ar;
}

}  // namespace homlab
