// Acceptance battery: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "homlab/cli.hpp"
#include "homlab/estimators.hpp"
#include "homlab/msfem.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace homlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    std::string failures;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            failures += " [failed: " + what + "]";
        }
    }
};

std::string pct(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * v << "%";
    return os.str();
}

std::string num(double v, int digits = 4) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

// Invariants gathered while criteria 2-8 run; criterion 9 checks them.
struct InvariantLog {
    std::size_t voigt_reuss_violations = 0;
    std::size_t estimator_runs = 0;
    std::size_t msfem_solutions = 0;
    double worst_jump = 0.0;
    double worst_constraint = 0.0;
    double worst_orthogonality = 0.0;
    double worst_galerkin = 0.0;
    double worst_inside = 0.0;
};
InvariantLog g_inv;

void record(const EstimatorReport& r) {
    g_inv.voigt_reuss_violations += r.voigt_reuss_violations;
    ++g_inv.estimator_runs;
}

const double kDykhne = std::sqrt(60.0);

double extrapolated_mean(int n, int m, std::uint64_t seed, double& ci) {
    const auto law = FieldLaw::checkerboard(3.0, 20.0);
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) {
        const auto field = realize_field(law, sample_configuration(law, n, seed, i));
        v[i] = 2.0 * effective_tensor(field, 8)(0, 0) - effective_tensor(field, 4)(0, 0);
    }
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / m;
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    ci = 1.96 * std::sqrt(var / (m - 1) / m);
    return mu;
}

Outcome criterion1() {
    Outcome o;
    const auto field = CoefficientField::constant(3, (Mat2() << 4.0, 1.0, 1.0, 2.0).finished());
    const double id_err = (effective_tensor(field, 4) - field.at(0, 0)).cwiseAbs().maxCoeff();
    o.require(id_err <= 1e-10, "constant tensor identity");

    CoefficientField lam;
    lam.n = 2;
    lam.cells = {3.0 * Mat2::Identity(), 20.0 * Mat2::Identity(), 3.0 * Mat2::Identity(), 20.0 * Mat2::Identity()};
    const Mat2 a = effective_tensor(lam, 8);
    const double harmonic = 120.0 / 23.0, arithmetic = 11.5;
    const double lam_err = std::max(std::abs(a(0, 0) - harmonic) / harmonic, std::abs(a(1, 1) - arithmetic) / arithmetic);
    o.require(lam_err <= 1e-6, "laminate");

    const auto ref = reference_solve(PerforationSet{}, named_source("one"), 256);
    const double center = ref.at(128, 128);
    const double series = 0.0736713530;
    const double center_err = std::abs(center - series) / series;
    o.require(center_err <= 1e-3, "Poisson center value");
    o.detail << "identity err " << num(id_err, 2) << ", laminate rel err " << num(lam_err, 2) << ", center "
             << num(center, 7) << " (rel err " << num(center_err, 2) << ")";
    return o;
}

Outcome criterion2() {
    Outcome o;
    const auto law = FieldLaw::checkerboard(3.0, 20.0);
    const auto mc = mc_estimate(law, 20, 8, 100, 2020);
    record(mc);
    const double gap = std::abs(mc.mean(0, 0) - kDykhne);
    o.require(gap <= mc.ci95(0, 0), "n = 20 CI contains sqrt(60)");
    o.require(mc.voigt_reuss_violations == 0, "Voigt-Reuss bounds");
    double ci60 = 0.0;
    const double mu60 = extrapolated_mean(60, 20, 6060, ci60);
    o.require(std::abs(mu60 - kDykhne) <= ci60, "n = 60 extrapolated CI contains sqrt(60)");
    o.detail << "n=20 mean A11 " << num(mc.mean(0, 0), 5) << " +- " << num(mc.ci95(0, 0), 3) << " vs "
             << num(kDykhne, 5) << "; n=60 cross-check (r=4,8 extrapolated, m=20) " << num(mu60, 5) << " +- "
             << num(ci60, 3);
    return o;
}

Outcome criterion3() {
    Outcome o;
    const auto law = FieldLaw::checkerboard(3.0, 20.0);
    std::vector<double> gains;
    for (int n : {5, 10, 20}) {
        const auto mc = mc_estimate(law, n, 8, 200, 300 + n);
        const auto av = antithetic_estimate(law, n, 8, 100, 400 + n);
        record(mc);
        record(av);
        const std::vector<EstimatorReport> reps{mc, av};
        const auto table = compare_strategies(reps);
        const double gain = table.row(Strategy::Antithetic, 0).factor;
        gains.push_back(gain);
        o.require(gain >= 3.0 && gain <= 15.0, "gain in [3, 15] at n = " + std::to_string(n));
        o.require(std::abs(av.mean(0, 0) - mc.mean(0, 0)) <= av.ci95(0, 0) + mc.ci95(0, 0),
                  "unbiased at n = " + std::to_string(n));
        o.detail << "n=" << n << " gain " << num(gain, 3) << "; ";
    }
    const double spread = *std::max_element(gains.begin(), gains.end()) / *std::min_element(gains.begin(), gains.end());
    o.require(spread <= 2.5, "max/min gain <= 2.5");
    o.detail << "max/min " << num(spread, 3);
    return o;
}

Outcome criterion4() {
    Outcome o;
    const auto law = FieldLaw::perturbed_periodic(3.0 * Mat2::Identity(), 17.0 * Mat2::Identity(), 0.5);
    const int n = 10, r = 8;
    const auto defects = defect_coefficients(law, n, r, 2);
    const auto mc = mc_estimate(law, n, r, 100, 4001);
    const auto cv1 = control_variate_estimate(law, n, r, 100, 1, 4002, defects);
    const auto cv2 = control_variate_estimate(law, n, r, 100, 2, 4003, defects);
    for (const auto* rep : {&mc, &cv1, &cv2}) record(*rep);
    const std::vector<EstimatorReport> reps{mc, cv1, cv2};
    const auto table = compare_strategies(reps);
    const double f1 = table.row(Strategy::ControlVariate1, 0).factor;
    const double f2 = table.row(Strategy::ControlVariate2, 0).factor;
    o.require(f1 >= 3.0, "order-1 factor >= 3");
    o.require(f2 >= 10.0 && f2 > f1, "order-2 factor >= 10 and above order 1");

    const auto flat = FieldLaw::perturbed_periodic(3.0 * Mat2::Identity(), Mat2::Zero(), 0.5);
    const auto flat_defects = defect_coefficients(flat, 4, 4, 2);
    const auto flat_mc = mc_estimate(flat, 4, 4, 20, 4004);
    const auto flat_cv = control_variate_estimate(flat, 4, 4, 20, 2, 4004, flat_defects);
    const bool same = flat_cv.mean == flat_mc.mean && flat_cv.var == flat_mc.var;
    const bool flagged = flat_cv.degenerate_control[0] && flat_cv.degenerate_control[1] && flat_cv.degenerate_control[2];
    o.require(same && flagged, "c_per = 0 falls back to MC exactly");
    o.detail << "factor CV1 " << num(f1, 3) << ", CV2 " << num(f2, 3) << "; c_per=0 fallback "
             << (same && flagged ? "exact" : "differs");
    return o;
}

Outcome criterion5() {
    Outcome o;
    const auto law = FieldLaw::checkerboard(3.0, 20.0);
    const int n = 10, r = 8;
    const auto dec = sqs_decomposition(law);
    const auto aux = sqs_auxiliary(dec.c0, dec.c1, n, r, dec.p);
    const auto mc = mc_estimate(law, n, r, 100, 5001);
    const auto s1 = sqs_estimate(law, n, r, 100, 5002, SqsMode::Exact1, 100, aux);
    const auto s2 = sqs_estimate(law, n, r, 100, 5003, SqsMode::Ranked2, 2000, aux);
    for (const auto* rep : {&mc, &s1, &s2}) record(*rep);
    const std::vector<EstimatorReport> reps{mc, s1, s2};
    const auto table = compare_strategies(reps);
    const double f1 = table.row(Strategy::SQS1, 0).factor;
    const double f2 = table.row(Strategy::SQS2, 0).factor;
    o.require(f1 >= 4.0, "SQS1 factor >= 4");
    o.require(f2 > f1 && f2 >= 15.0, "SQS2 factor >= 15 and above SQS1");
    o.require(std::abs(s1.mean(0, 0) - mc.mean(0, 0)) <= 3.0 * mc.ci95(0, 0), "SQS1 bias");
    o.detail << "factor SQS1 " << num(f1, 3) << ", SQS2 " << num(f2, 3) << "; |SQS1 - MC| "
             << num(std::abs(s1.mean(0, 0) - mc.mean(0, 0)), 3) << " vs 3 ci " << num(3.0 * mc.ci95(0, 0), 3);
    return o;
}

/// One MsFEM solution plus its invariants.
ErrorPair msfem_case(const CoarseMesh& mesh, const PerforationSet& perf, const Source& f, const FineSolution& ref,
                     MsMethod method, bool bubbles, int fine_n) {
    CoarseSolution sol;
    if (method == MsMethod::CrouzeixRaviart) {
        const auto space = build_cr_space(mesh, perf, fine_n, 0.0, bubbles);
        sol = msfem_solve(space, f);
        g_inv.worst_constraint = std::max(g_inv.worst_constraint, basis_constraint_defect(space));
        g_inv.worst_orthogonality = std::max(g_inv.worst_orthogonality, orthogonality_residual(space, 3, 99));
    } else {
        sol = baseline_solve(mesh, perf, f, method, bubbles, fine_n, 0.0);
    }
    g_inv.worst_jump = std::max(g_inv.worst_jump, mean_jump_defect(sol.field));
    g_inv.worst_galerkin = std::max(g_inv.worst_galerkin, sol.galerkin_residual);
    g_inv.worst_inside = std::max(g_inv.worst_inside, max_inside_ratio(sol.field, perf));
    ++g_inv.msfem_solutions;
    return compute_errors(sol, ref);
}

bool within(double value, double target, double points) { return std::abs(100.0 * value - target) <= points; }

Outcome criterion6() {
    Outcome o;
    const Source f = named_source("one");
    const auto mesh = CoarseMesh::uniform(0.2);
    ErrorPair cr[2], lin[2];
    for (int test = 0; test < 2; ++test) {
        PerforationSpec spec;
        spec.kind = test == 0 ? PerforationKind::PeriodicDiscs : PerforationKind::ShiftedPeriodicDiscs;
        spec.epsilon = 0.1;
        spec.radius_factor = 0.2;
        const auto perf = build_perforations(spec);
        // 640 is the nearest multiple of 5 * 32 to 512.
        const auto ref = reference_solve(perf, f, 640);
        const int fine = default_fine_n(mesh, perf);
        cr[test] = msfem_case(mesh, perf, f, ref, MsMethod::CrouzeixRaviart, true, fine);
        lin[test] = msfem_case(mesh, perf, f, ref, MsMethod::MsFEMLinear, true, fine);
    }
    o.require(within(cr[0].l2_rel, 9, 5) && within(cr[0].h1_rel, 24, 5), "Test 1 CR within 5 points of (9, 24)");
    o.require(within(lin[0].l2_rel, 16, 6) && within(lin[0].h1_rel, 32, 6),
              "Test 1 linear within 6 points of (16, 32)");
    o.require(within(cr[1].l2_rel, 9, 5) && within(cr[1].h1_rel, 27, 5), "Test 2 CR within 5 points of (9, 27)");
    o.require(within(lin[1].l2_rel, 28, 8) && within(lin[1].h1_rel, 52, 8),
              "Test 2 linear within 8 points of (28, 52)");
    const double cr_dl2 = 100 * (cr[1].l2_rel - cr[0].l2_rel), cr_dh1 = 100 * (cr[1].h1_rel - cr[0].h1_rel);
    const double lin_dl2 = 100 * (lin[1].l2_rel - lin[0].l2_rel);
    o.require(cr_dl2 <= 5 && cr_dh1 <= 5, "CR degradation <= 5 points");
    o.require(lin_dl2 >= 8, "linear L2 degradation >= 8 points");
    o.detail << "Test 1 CR " << pct(cr[0].l2_rel) << "/" << pct(cr[0].h1_rel) << ", linear " << pct(lin[0].l2_rel)
             << "/" << pct(lin[0].h1_rel) << "; Test 2 CR " << pct(cr[1].l2_rel) << "/" << pct(cr[1].h1_rel)
             << ", linear " << pct(lin[1].l2_rel) << "/" << pct(lin[1].h1_rel) << "; degradation CR "
             << num(cr_dl2, 2) << "/" << num(cr_dh1, 2) << " pts, linear L2 " << num(lin_dl2, 3) << " pts";
    return o;
}

Outcome criterion7() {
    Outcome o;
    PerforationSpec spec;
    spec.kind = PerforationKind::PeriodicDiscs;
    spec.epsilon = 0.03;
    spec.radius_factor = 0.35;
    const auto perf = build_perforations(spec);
    const Source f = named_source("sine");
    const int nref = 512;
    const auto ref = reference_solve(perf, f, nref);
    for (int k : {32, 16, 8}) {
        const CoarseMesh mesh(k);
        const int fine = nref / k;
        ErrorPair e[2][2];  // [method][bubbles]
        for (int m = 0; m < 2; ++m)
            for (int b = 0; b < 2; ++b)
                e[m][b] = msfem_case(mesh, perf, f, ref, m == 0 ? MsMethod::CrouzeixRaviart : MsMethod::MsFEMLinear,
                                     b == 1, fine);
        const std::string H = "H=1/" + std::to_string(k);
        for (int m = 0; m < 2; ++m)
            o.require(e[m][1].l2_rel <= e[m][0].l2_rel && e[m][1].h1_rel <= e[m][0].h1_rel,
                      H + (m == 0 ? " CR" : " linear") + " bubbles help");
        for (int b = 0; b < 2; ++b)
            o.require(e[0][b].l2_rel <= e[1][b].l2_rel && e[0][b].h1_rel <= e[1][b].h1_rel,
                      H + " CR <= linear" + (b ? " with bubbles" : " without bubbles"));
        o.detail << H << " CR " << pct(e[0][0].l2_rel) << "->" << pct(e[0][1].l2_rel) << " linear "
                 << pct(e[1][0].l2_rel) << "->" << pct(e[1][1].l2_rel) << " (L2, no bubbles->bubbles); ";
    }
    return o;
}

Outcome criterion8() {
    Outcome o;
    PerforationSpec spec;
    spec.kind = PerforationKind::RandomRectangles;
    spec.count = 100;
    spec.seed = 1;
    const auto perf = build_perforations(spec);
    const Source f = named_source("one");
    const int nref = 512;
    const auto ref = reference_solve(perf, f, nref);
    for (int k : {32, 16, 8, 4}) {
        const CoarseMesh mesh(k);
        const auto cr = msfem_case(mesh, perf, f, ref, MsMethod::CrouzeixRaviart, true, nref / k);
        const auto lin = msfem_case(mesh, perf, f, ref, MsMethod::MsFEMLinear, true, nref / k);
        o.require(cr.l2_rel <= lin.l2_rel && cr.h1_rel <= lin.h1_rel, "H=1/" + std::to_string(k) + " CR <= linear");
        o.detail << "H=1/" << k << " CR " << pct(cr.l2_rel) << "/" << pct(cr.h1_rel) << " linear " << pct(lin.l2_rel)
                 << "/" << pct(lin.h1_rel) << "; ";
    }
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Runs a configuration twice and replays its archived snapshot.
bool archive_reproducible(const std::string& name, const std::string& text, std::string& why) {
    const fs::path root = fs::temp_directory_path() / "homlab_acceptance" / name;
    fs::remove_all(root);
    const auto parsed = parse_config(text);
    if (!parsed.ok()) {
        why = name + ": config does not parse";
        return false;
    }
    const auto a = run(parsed.config, root / "a");
    const auto b = run(parsed.config, root / "b");
    const auto snapshot = parse_config(slurp(root / "a" / "config.ini"));
    const auto c = run(snapshot.config, root / "replay");
    if (!a.complete || !b.complete || !c.complete) {
        why = name + ": run failed: " + a.error + b.error + c.error;
        return false;
    }
    if (slurp(root / "a" / "manifest.json") != slurp(root / "b" / "manifest.json")) {
        why = name + ": manifests differ";
        return false;
    }
    for (const auto& f : a.files)
        if (slurp(root / "a" / f) != slurp(root / "replay" / f)) {
            why = name + ": replay differs in " + f;
            return false;
        }
    return true;
}

Outcome criterion9() {
    Outcome o;
    o.require(g_inv.voigt_reuss_violations == 0, "Voigt-Reuss bounds in every estimator run");
    o.require(g_inv.worst_jump <= 1e-8, "zero mean jumps");
    o.require(g_inv.worst_constraint <= 1e-8, "basis edge-integral constraints");
    o.require(g_inv.worst_orthogonality <= 1e-6, "orthogonality residual");
    o.require(g_inv.worst_galerkin <= 1e-8, "coarse Galerkin residual");
    o.require(g_inv.worst_inside <= 1e-4, "solutions vanish in the perforations");

    // Reduced versions of the configurations of criteria 2-8.
    const std::vector<std::pair<std::string, std::string>> configs{
        {"checkerboard",
         "[experiment]\nkind = vr-compare\nseed = 7\n[law]\nalpha = 3\nbeta = 20\n"
         "[homogenization]\nn = 4, 10\nm = 10\npool = 40\nstrategies = mc, antithetic, sqs1, sqs2\n"},
        {"perturbed",
         "[experiment]\nkind = vr-compare\n[law]\ntype = perturbed-periodic\na_per = 3\nc_per = 17\neta = 0.5\n"
         "[homogenization]\nn = 4\nm = 10\nstrategies = mc, cv1, cv2\n"},
        {"robustness",
         "[experiment]\nkind = msfem-robustness\n[geometry]\ntype = periodic-discs\nepsilon = 0.1\n"
         "radius_factor = 0.2\n[msfem]\nH = 0.2\nmethods = cr, linear\nreference_n = 320\n"},
        {"discs",
         "[experiment]\nkind = msfem\n[geometry]\ntype = periodic-discs\nepsilon = 0.03\nradius_factor = 0.35\n"
         "[msfem]\nH = 1/8\nmethods = cr, linear\nbubbles = true, false\nrhs = sine\nreference_n = 256\n"
         "fine_n = aligned\n"},
        {"rectangles",
         "[experiment]\nkind = msfem\n[geometry]\ntype = random-rectangles\n[msfem]\nH = 1/8\n"
         "methods = cr, linear\nreference_n = 256\nfine_n = aligned\nheatmap = true\n"},
    };
    for (const auto& [name, text] : configs) {
        std::string why;
        o.require(archive_reproducible(name, text, why), "archive replay " + why);
    }
    o.detail << g_inv.estimator_runs << " estimator runs, " << g_inv.msfem_solutions
             << " MsFEM solutions; worst jump " << num(g_inv.worst_jump, 2) << ", constraint "
             << num(g_inv.worst_constraint, 2) << ", orthogonality " << num(g_inv.worst_orthogonality, 2)
             << ", Galerkin " << num(g_inv.worst_galerkin, 2) << ", inside ratio " << num(g_inv.worst_inside, 2)
             << "; " << configs.size() << " archives replayed byte for byte";
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        all = all && o.pass;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << std::fixed
                  << std::setprecision(0) << secs << " s) " << o.detail.str() << o.failures << std::endl;
        std::cout.unsetf(std::ios::fixed);
    }
    return all ? 0 : 1;
}
