#include "homlab/estimators.hpp"

#include "homlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace homlab {

namespace {

constexpr double kDegenerateVariance = 1e-14;

struct SampleTensors {
    std::vector<Mat2> values;
    std::size_t voigt_reuss_violations = 0;
};

SampleTensors evaluate(const FieldLaw& law, std::span<const Configuration> configs, int r,
                       const EstimatorOptions& opts) {
    SampleTensors out;
    out.values.resize(configs.size());
    std::vector<std::uint8_t> violated(configs.size(), 0);
    parallel_for(configs.size(), opts.threads, [&](std::size_t i) {
        try {
            const CoefficientField field = realize_field(law, configs[i]);
            const Mat2 a = effective_tensor(field, r, opts.solver);
            violated[i] = voigt_reuss(field).contains(a) ? 0 : 1;
            out.values[i] = a;
        } catch (const SolverError& e) {
            throw SolverError("sample " + std::to_string(i) + ": " + e.what(), e.iterations(), e.residual());
        }
    });
    out.voigt_reuss_violations = static_cast<std::size_t>(std::count(violated.begin(), violated.end(), 1));
    return out;
}

void fill_statistics(EstimatorReport& rep) {
    const auto m = rep.samples.size();
    rep.m = m;
    rep.mean.setZero();
    for (const auto& s : rep.samples) rep.mean += s;
    rep.mean /= static_cast<double>(m);
    rep.var.setZero();
    for (const auto& s : rep.samples) rep.var += (s - rep.mean).cwiseAbs2();
    rep.var /= static_cast<double>(m - 1);
    rep.ci95 = 1.96 * (rep.var / static_cast<double>(m)).cwiseSqrt();
}

double entry(const Mat2& a, std::size_t e) { return a(kTensorEntries[e].first, kTensorEntries[e].second); }

void set_entry(Mat2& a, std::size_t e, double v) {
    a(kTensorEntries[e].first, kTensorEntries[e].second) = v;
    a(kTensorEntries[e].second, kTensorEntries[e].first) = v;
}

double covariance(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c += (x[i] - mx) * (y[i] - my);
    return c / (n - 1.0);
}

EstimatorReport base_report(Strategy s, const FieldLaw& law, int n, int r) {
    EstimatorReport rep;
    rep.strategy = s;
    rep.law = law.describe();
    rep.n = n;
    rep.r = r;
    return rep;
}

void check_common(const FieldLaw& law, int n, int r, std::size_t m) {
    law.validate();
    if (n < 1 || r < 1) throw ParameterError("estimators need n >= 1 and r >= 1");
    if (m < 2) throw ParameterError("estimators need at least two samples");
}

void note_voigt_reuss(EstimatorReport& rep, std::size_t violations) {
    rep.voigt_reuss_violations += violations;
    if (violations)
        rep.warnings.push_back(std::to_string(violations) + " realizations violated the Voigt-Reuss bounds");
}

}  // namespace

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::MC: return "MC";
        case Strategy::Antithetic: return "Antithetic";
        case Strategy::ControlVariate1: return "ControlVariate1";
        case Strategy::ControlVariate2: return "ControlVariate2";
        case Strategy::SQS1: return "SQS1";
        case Strategy::SQS2: return "SQS2";
    }
    return "?";
}

Strategy parse_strategy(const std::string& name) {
    std::string k = name;
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (k == "mc") return Strategy::MC;
    if (k == "antithetic" || k == "av") return Strategy::Antithetic;
    if (k == "cv1" || k == "controlvariate1") return Strategy::ControlVariate1;
    if (k == "cv2" || k == "controlvariate2") return Strategy::ControlVariate2;
    if (k == "sqs1") return Strategy::SQS1;
    if (k == "sqs2") return Strategy::SQS2;
    throw ParameterError("unknown strategy '" + name + "'");
}

std::string entry_name(std::size_t e) {
    static const char* names[] = {"11", "12", "22"};
    return names[e];
}

EstimatorReport mc_estimate(const FieldLaw& law, int n, int r, std::size_t m, std::uint64_t seed,
                            const EstimatorOptions& opts) {
    check_common(law, n, r, m);
    std::vector<Configuration> configs(m);
    for (std::size_t i = 0; i < m; ++i) configs[i] = sample_configuration(law, n, seed, i);
    auto tensors = evaluate(law, configs, r, opts);

    EstimatorReport rep = base_report(Strategy::MC, law, n, r);
    rep.samples = std::move(tensors.values);
    rep.solves = 2 * m;
    note_voigt_reuss(rep, tensors.voigt_reuss_violations);
    fill_statistics(rep);
    return rep;
}

EstimatorReport antithetic_estimate(const FieldLaw& law, int n, int r, std::size_t m_pairs, std::uint64_t seed,
                                    const EstimatorOptions& opts) {
    check_common(law, n, r, m_pairs);
    std::vector<Configuration> configs(2 * m_pairs);
    for (std::size_t i = 0; i < m_pairs; ++i) {
        configs[2 * i] = sample_configuration(law, n, seed, i);
        configs[2 * i + 1] = antithetic_transform(configs[2 * i]);
    }
    auto tensors = evaluate(law, configs, r, opts);

    EstimatorReport rep = base_report(Strategy::Antithetic, law, n, r);
    rep.samples.resize(m_pairs);
    for (std::size_t i = 0; i < m_pairs; ++i)
        rep.samples[i] = 0.5 * (tensors.values[2 * i] + tensors.values[2 * i + 1]);
    rep.solves = 4 * m_pairs;
    note_voigt_reuss(rep, tensors.voigt_reuss_violations);
    fill_statistics(rep);
    return rep;
}

EstimatorReport control_variate_estimate(const FieldLaw& law, int n, int r, std::size_t m, int order,
                                         std::uint64_t seed, const DefectCoefficients& defects,
                                         const EstimatorOptions& opts) {
    if (law.kind != LawKind::PerturbedPeriodic)
        throw ParameterError("control variates need a perturbed periodic law");
    check_common(law, n, r, m);
    if (order != 1 && order != 2) throw ParameterError("control variate order must be 1 or 2");
    if (defects.n != n) throw DimensionError("defect coefficients were computed for a different n");
    if (order == 2 && defects.order != 2) throw ParameterError("order-2 control needs pair coefficients");

    std::vector<Configuration> configs(m);
    for (std::size_t i = 0; i < m; ++i) configs[i] = sample_configuration(law, n, seed, i);
    auto tensors = evaluate(law, configs, r, opts);

    const double volume = static_cast<double>(n) * n;
    const double eta = law.eta;
    const Mat2 delta1 = defects.first_order_delta();

    // Controls: X1 = (#defects) delta1, X2 = sum over unordered defect pairs of delta2(offset).
    std::vector<Mat2> x1(m), x2(m, Mat2::Zero());
    const Mat2 ex1 = volume * eta * delta1;
    Mat2 ex2 = Mat2::Zero();
    std::vector<Mat2> delta2;
    if (order == 2) {
        delta2.resize(static_cast<std::size_t>(n) * n);
        for (int dy = 0; dy < n; ++dy)
            for (int dx = 0; dx < n; ++dx) {
                delta2[static_cast<std::size_t>(dy) * n + dx] = (dx || dy) ? defects.pair_delta(dx, dy) : Mat2::Zero();
                ex2 += delta2[static_cast<std::size_t>(dy) * n + dx];
            }
        ex2 *= 0.5 * volume * eta * eta;
    }
    for (std::size_t s = 0; s < m; ++s) {
        const auto& c = configs[s];
        x1[s] = static_cast<double>(c.ones()) * delta1;
        if (order != 2) continue;
        std::vector<int> sites;
        for (int k = 0; k < n * n; ++k)
            if (c.draws[static_cast<std::size_t>(k)]) sites.push_back(k);
        Mat2 acc = Mat2::Zero();
        for (std::size_t a = 0; a < sites.size(); ++a)
            for (std::size_t b = a + 1; b < sites.size(); ++b) {
                const int dx = (sites[b] % n - sites[a] % n + n) % n;
                const int dy = (sites[b] / n - sites[a] / n + n) % n;
                acc += delta2[static_cast<std::size_t>(dy) * n + dx];
            }
        x2[s] = acc;
    }

    EstimatorReport rep = base_report(order == 1 ? Strategy::ControlVariate1 : Strategy::ControlVariate2, law, n, r);
    rep.offline_solves = defects.solves;
    rep.solves = 2 * m;
    note_voigt_reuss(rep, tensors.voigt_reuss_violations);
    rep.rho.assign(static_cast<std::size_t>(order), Mat2::Zero());
    rep.samples = tensors.values;

    for (std::size_t e = 0; e < kTensorEntries.size(); ++e) {
        std::vector<double> a(m), c1(m), c2(m);
        for (std::size_t s = 0; s < m; ++s) {
            a[s] = entry(tensors.values[s], e);
            c1[s] = entry(x1[s], e) - entry(ex1, e);
            c2[s] = entry(x2[s], e) - entry(ex2, e);
        }
        const double v1 = covariance(c1, c1);
        const double v2 = order == 2 ? covariance(c2, c2) : 0.0;
        double rho1 = 0.0, rho2 = 0.0;
        const bool ok1 = v1 > kDegenerateVariance;
        const bool ok2 = order == 2 && v2 > kDegenerateVariance;
        if (ok1 && ok2) {
            const double v12 = covariance(c1, c2);
            const double det = v1 * v2 - v12 * v12;
            const double g1 = covariance(a, c1);
            const double g2 = covariance(a, c2);
            if (det > 1e-12 * v1 * v2) {
                rho1 = (v2 * g1 - v12 * g2) / det;
                rho2 = (v1 * g2 - v12 * g1) / det;
            } else {
                rho1 = g1 / v1;
                rep.warnings.push_back("entry " + entry_name(e) + ": collinear controls, pair term dropped");
            }
        } else if (ok1) {
            rho1 = covariance(a, c1) / v1;
        } else if (ok2) {
            rho2 = covariance(a, c2) / v2;
        }
        if (!ok1 && !ok2) {
            rep.degenerate_control[e] = true;
            rep.warnings.push_back("entry " + entry_name(e) + ": degenerate control variance, rho = 0");
        }
        set_entry(rep.rho[0], e, rho1);
        if (order == 2) set_entry(rep.rho[1], e, rho2);
        for (std::size_t s = 0; s < m; ++s) set_entry(rep.samples[s], e, a[s] - rho1 * c1[s] - rho2 * c2[s]);
    }
    fill_statistics(rep);
    return rep;
}

EstimatorReport sqs_estimate(const FieldLaw& law, int n, int r, std::size_t m_keep, std::uint64_t seed, SqsMode mode,
                             std::size_t pool, const SqsAuxiliary& aux, const EstimatorOptions& opts) {
    check_common(law, n, r, m_keep);
    const double p = law.probability();
    if (mode == SqsMode::Ranked2) {
        if (pool < m_keep) throw ParameterError("selection pool must be at least the number of kept samples");
        if (aux.n != n) throw DimensionError("auxiliary integrals were computed for a different n");
    }

    std::vector<Configuration> kept;
    std::size_t rejected = 0;
    if (mode == SqsMode::Exact1) {
        kept.reserve(m_keep);
        for (std::size_t i = 0; i < m_keep; ++i) kept.push_back(sqs1_exact_sample(n, seed, i, p));
    } else {
        std::vector<Configuration> candidates(pool);
        std::vector<double> residual(pool);
        for (std::size_t i = 0; i < pool; ++i) candidates[i] = sqs1_exact_sample(n, seed, i, p);
        parallel_for(pool, opts.threads,
                     [&](std::size_t i) { residual[i] = sqs_condition_values(candidates[i], aux).s2_residual; });
        std::vector<std::size_t> order(pool);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return residual[a] < residual[b]; });
        order.resize(m_keep);
        std::sort(order.begin(), order.end());
        kept.reserve(m_keep);
        for (auto i : order) kept.push_back(candidates[i]);
        rejected = pool - m_keep;
    }
    auto tensors = evaluate(law, kept, r, opts);

    EstimatorReport rep = base_report(mode == SqsMode::Exact1 ? Strategy::SQS1 : Strategy::SQS2, law, n, r);
    rep.samples = std::move(tensors.values);
    rep.solves = 2 * m_keep;
    rep.rejected = rejected;
    rep.offline_solves = mode == SqsMode::Ranked2 ? aux.solves : 0;
    note_voigt_reuss(rep, tensors.voigt_reuss_violations);
    fill_statistics(rep);
    return rep;
}

const ComparisonRow& ComparisonTable::row(Strategy s, std::size_t entry) const {
    for (const auto& r : rows)
        if (r.strategy == s && r.entry == entry) return r;
    throw ParameterError("comparison table has no row for " + to_string(s) + " entry " + entry_name(entry));
}

ComparisonTable compare_strategies(std::span<const EstimatorReport> reports) {
    if (reports.empty()) throw ComparabilityError("no reports to compare");
    const EstimatorReport* mc = nullptr;
    for (const auto& r : reports)
        if (r.strategy == Strategy::MC) {
            mc = &r;
            break;
        }
    if (!mc) throw ComparabilityError("comparison needs an MC baseline report");
    for (const auto& r : reports)
        if (r.law != mc->law || r.n != mc->n || r.r != mc->r)
            throw ComparabilityError("reports do not share law, n and r");

    ComparisonTable table;
    table.law = mc->law;
    table.n = mc->n;
    table.r = mc->r;
    for (const auto& rep : reports)
        for (std::size_t e = 0; e < kTensorEntries.size(); ++e) {
            ComparisonRow row;
            row.strategy = rep.strategy;
            row.entry = e;
            const double var_mc = entry(mc->var, e);
            const double var_x = entry(rep.var, e);
            const double cost_mc = var_mc * mc->cost_per_sample();
            const double cost_x = var_x * rep.cost_per_sample();
            if (cost_x == 0.0)
                row.factor = cost_mc == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            else
                row.factor = cost_mc / cost_x;
            const double vm_mc = var_mc / static_cast<double>(mc->m);
            const double vm_x = var_x / static_cast<double>(rep.m);
            if (vm_x == 0.0)
                row.mean_variance_ratio = vm_mc == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            else
                row.mean_variance_ratio = vm_mc / vm_x;
            row.bias = std::abs(entry(rep.mean, e) - entry(mc->mean, e));
            row.combined_ci = entry(rep.ci95, e) + entry(mc->ci95, e);
            row.bias_within_ci = row.bias <= row.combined_ci;
            table.rows.push_back(row);
        }
    return table;
}

void write_estimator_csv(std::ostream& os, std::span<const EstimatorReport> reports, bool header) {
    os.precision(17);
    if (header) os << "strategy,n,r,m,entry,mean,var,ci95,solves,rejected,rho\n";
    for (const auto& rep : reports)
        for (std::size_t e = 0; e < kTensorEntries.size(); ++e) {
            os << to_string(rep.strategy) << ',' << rep.n << ',' << rep.r << ',' << rep.m << ',' << entry_name(e)
               << ',' << entry(rep.mean, e) << ',' << entry(rep.var, e) << ',' << entry(rep.ci95, e) << ','
               << rep.solves << ',' << rep.rejected << ',';
            for (std::size_t k = 0; k < rep.rho.size(); ++k) os << (k ? ";" : "") << entry(rep.rho[k], e);
            os << '\n';
        }
}

void write_comparison_csv(std::ostream& os, std::span<const ComparisonTable> tables, bool header) {
    os.precision(17);
    if (header) os << "n,r,strategy,entry,factor,mean_variance_ratio,bias,combined_ci,bias_within_ci\n";
    for (const auto& t : tables)
        for (const auto& row : t.rows)
            os << t.n << ',' << t.r << ',' << to_string(row.strategy) << ',' << entry_name(row.entry) << ','
               << row.factor << ',' << row.mean_variance_ratio << ',' << row.bias << ',' << row.combined_ci << ','
               << (row.bias_within_ci ? 1 : 0) << '\n';
}

}  // namespace homlab
