#pragma once

#include "homlab/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace homlab {

enum class LawKind { Checkerboard, PerturbedPeriodic };

/// Law of a cell-wise i.i.d. Bernoulli coefficient field.
///
/// Checkerboard: each unit cell carries alpha*Id or beta*Id with probability
/// 1/2 each. PerturbedPeriodic: each cell carries a_per, or a_per + c_per
/// with probability eta. The periodic matrices are constant on the unit cell.
struct FieldLaw {
    LawKind kind = LawKind::Checkerboard;
    double alpha = 3.0;
    double beta = 20.0;
    Mat2 a_per = Mat2::Identity();
    Mat2 c_per = Mat2::Zero();
    double eta = 0.5;

    static FieldLaw checkerboard(double alpha, double beta);
    static FieldLaw perturbed_periodic(const Mat2& a_per, const Mat2& c_per, double eta);

    /// Probability of drawing a 1 in a cell.
    double probability() const;

    /// Cell matrix for a draw of 0 or 1.
    Mat2 phase(int draw) const;

    /// Throws ParameterError or EllipticityError.
    void validate() const;

    /// Stable one-line description; used to check comparability of reports.
    std::string describe() const;
};

/// One realization: an n x n lattice of Bernoulli outcomes.
/// Cell (i, j) (i along x1) is stored at j * n + i.
struct Configuration {
    int n = 0;
    std::vector<std::uint8_t> draws;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    double p = 0.5;
    bool antithetic = false;
    /// True when the draws come from the counter-based sampler, so the
    /// underlying uniforms can be regenerated from (seed, index, cell).
    bool sampled = false;

    std::uint8_t at(int i, int j) const { return draws[static_cast<std::size_t>(j) * n + i]; }
    std::size_t ones() const;
};

/// Cell-wise constant symmetric matrix field on Q_N.
struct CoefficientField {
    int n = 0;
    std::vector<Mat2> cells;

    const Mat2& at(int i, int j) const { return cells[static_cast<std::size_t>(j) * n + i]; }
    static CoefficientField constant(int n, const Mat2& value);
};

/// Uniform in [0, 1) determined by (seed, index, i, j) alone.
double cell_uniform(std::uint64_t seed, std::uint64_t index, int i, int j);

/// 64-bit key derived from (seed, index, salt); used to seed per-sample engines.
std::uint64_t sample_key(std::uint64_t seed, std::uint64_t index, std::uint64_t salt);

Configuration sample_configuration(const FieldLaw& law, int n, std::uint64_t seed, std::uint64_t index);

/// Law-preserving flip. Bit flip for manual configurations and p = 1/2;
/// otherwise U -> 1 - U on the regenerated uniforms before thresholding.
Configuration antithetic_transform(const Configuration& c);

CoefficientField realize_field(const FieldLaw& law, const Configuration& c);

/// Uniformly random configuration with exactly round(p n^2) ones.
/// Throws InfeasibleError when p n^2 is not an integer.
Configuration sqs1_exact_sample(int n, std::uint64_t seed, std::uint64_t index, double p);

}  // namespace homlab
