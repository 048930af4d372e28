#pragma once

#include "homlab/cell_solver.hpp"
#include "homlab/field_sampler.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace homlab {

enum class Strategy { MC, Antithetic, ControlVariate1, ControlVariate2, SQS1, SQS2 };

std::string to_string(Strategy s);
/// Accepts the names produced by to_string and the short config spellings
/// (mc, antithetic, cv1, cv2, sqs1, sqs2). Throws ParameterError.
Strategy parse_strategy(const std::string& name);

/// The three distinct entries of a symmetric 2x2 tensor: 11, 12, 22.
inline constexpr std::array<std::pair<int, int>, 3> kTensorEntries{{{0, 0}, {0, 1}, {1, 1}}};
std::string entry_name(std::size_t entry);

struct EstimatorReport {
    Strategy strategy = Strategy::MC;
    std::string law;
    int n = 0;
    int r = 0;
    std::size_t m = 0;
    Mat2 mean = Mat2::Zero();
    Mat2 var = Mat2::Zero();
    Mat2 ci95 = Mat2::Zero();
    /// Corrector solves performed online (two directions per realization).
    std::size_t solves = 0;
    /// Offline solves (defect or auxiliary problems), not part of equal-cost accounting.
    std::size_t offline_solves = 0;
    std::size_t rejected = 0;
    /// Control coefficients, one matrix per control term, per entry.
    std::vector<Mat2> rho;
    /// Per entry: the control variance was degenerate and rho fell back to 0.
    std::array<bool, 3> degenerate_control{false, false, false};
    std::size_t voigt_reuss_violations = 0;
    /// Per-sample values of the estimator whose mean is reported.
    std::vector<Mat2> samples;
    std::vector<std::string> warnings;

    double cost_per_sample() const { return m ? static_cast<double>(solves) / static_cast<double>(m) : 0.0; }
};

struct EstimatorOptions {
    SolverOptions solver;
    int threads = 1;
};

EstimatorReport mc_estimate(const FieldLaw& law, int n, int r, std::size_t m, std::uint64_t seed,
                            const EstimatorOptions& opts = {});

EstimatorReport antithetic_estimate(const FieldLaw& law, int n, int r, std::size_t m_pairs, std::uint64_t seed,
                                    const EstimatorOptions& opts = {});

/// Control variate built from the defect expansion. Order 1 uses the one-defect
/// term; order 2 adds the pair term with its own coefficient.
EstimatorReport control_variate_estimate(const FieldLaw& law, int n, int r, std::size_t m, int order,
                                         std::uint64_t seed, const DefectCoefficients& defects,
                                         const EstimatorOptions& opts = {});

enum class SqsMode { Exact1, Ranked2 };

EstimatorReport sqs_estimate(const FieldLaw& law, int n, int r, std::size_t m_keep, std::uint64_t seed, SqsMode mode,
                             std::size_t pool, const SqsAuxiliary& aux, const EstimatorOptions& opts = {});

struct ComparisonRow {
    Strategy strategy = Strategy::MC;
    std::size_t entry = 0;
    /// Equal-cost variance-reduction factor against the MC baseline.
    double factor = 1.0;
    /// Ratio of the variances of the means, (var_MC / m_MC) / (var_X / m_X).
    double mean_variance_ratio = 1.0;
    double bias = 0.0;
    double combined_ci = 0.0;
    bool bias_within_ci = true;
};

struct ComparisonTable {
    std::string law;
    int n = 0;
    int r = 0;
    std::vector<ComparisonRow> rows;

    const ComparisonRow& row(Strategy s, std::size_t entry) const;
};

/// The first MC report is the baseline. Throws ComparabilityError when the
/// reports do not share (law, n, r) or when no MC report is present.
ComparisonTable compare_strategies(std::span<const EstimatorReport> reports);

/// Columns: strategy,n,r,m,entry,mean,var,ci95,solves,rejected,rho.
void write_estimator_csv(std::ostream& os, std::span<const EstimatorReport> reports, bool header = true);
void write_comparison_csv(std::ostream& os, std::span<const ComparisonTable> tables, bool header = true);

}  // namespace homlab
