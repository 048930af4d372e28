#pragma once

#include "homlab/field_sampler.hpp"
#include "homlab/types.hpp"

#include <Eigen/Sparse>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace homlab {

/// Periodic Q1 discretization of Q_N = (0, n)^2 with r sub-cells per unit
/// cell. Nodes on opposite faces are identified, so there are (n r)^2 nodes
/// and (n r)^2 elements. Node (a, b) is stored at b * side + a.
struct PeriodicGrid {
    int n = 1;
    int r = 1;

    int side() const { return n * r; }
    double h() const { return 1.0 / r; }
    std::size_t dofs() const { return static_cast<std::size_t>(side()) * side(); }
    std::size_t elements() const { return dofs(); }

    std::size_t node(int a, int b) const {
        const int s = side();
        a %= s;
        b %= s;
        if (a < 0) a += s;
        if (b < 0) b += s;
        return static_cast<std::size_t>(b) * s + a;
    }

    /// Unit cell index (flat, j * n + i) owning fine element (a, b).
    std::size_t cell_of_element(int a, int b) const {
        return static_cast<std::size_t>(b / r) * n + static_cast<std::size_t>(a / r);
    }

    bool operator==(const PeriodicGrid&) const = default;
};

struct SolverOptions {
    double tol = 1e-9;
    /// 0 selects the default cap of 50 * sqrt(dofs).
    std::size_t max_iterations = 0;
};

/// Q_N-periodic zero-mean corrector w_p on a PeriodicGrid.
struct CorrectorSolution {
    PeriodicGrid grid;
    Vec2 direction = Vec2::UnitX();
    Eigen::VectorXd values;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Assembled periodic stiffness operator -div(A grad .) for one coefficient
/// field. Reused across directions and right-hand sides.
class CellProblem {
public:
    CellProblem(const CoefficientField& field, int r);

    const PeriodicGrid& grid() const { return grid_; }
    const CoefficientField& field() const { return field_; }
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return matrix_; }

    /// Load vector of -div(A p): b_a = -int A p . grad(phi_a).
    Eigen::VectorXd corrector_rhs(const Vec2& p) const;

    /// Load vector of div(1_cell M p) for a source supported in one unit cell.
    Eigen::VectorXd cell_source_rhs(const Mat2& m, const Vec2& p, int ci, int cj) const;

    /// Preconditioned CG on the mean-zero subspace. Throws SolverError when
    /// the iteration cap is reached.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const SolverOptions& opts, std::size_t* iterations = nullptr,
                          double* residual = nullptr) const;

    CorrectorSolution solve_corrector(const Vec2& p, const SolverOptions& opts = {}) const;

    /// Volume average of A (e_j + grad w_j), columns j = 0, 1.
    Mat2 tensor(const CorrectorSolution& w1, const CorrectorSolution& w2) const;

    /// Dirichlet energy (1/|Q_N|) int (p + grad w)^T A (p + grad w).
    double energy(const CorrectorSolution& w) const;

    /// Mean gradient of a nodal field over fine element (a, b).
    Vec2 element_gradient(const Eigen::VectorXd& values, int a, int b) const;

    /// Integral of grad(values) over unit cell (ci, cj).
    Vec2 cell_gradient_integral(const Eigen::VectorXd& values, int ci, int cj) const;

private:
    CoefficientField field_;
    PeriodicGrid grid_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix_;
    Eigen::VectorXd inv_diag_;
};

CorrectorSolution solve_corrector(const CoefficientField& field, const Vec2& p, int r, const SolverOptions& opts = {});

/// Throws DimensionError when the correctors were not solved on the field's grid.
Mat2 homogenized_tensor(const CoefficientField& field, std::span<const CorrectorSolution> w);

/// Both correctors and the tensor in one call.
Mat2 effective_tensor(const CoefficientField& field, int r, const SolverOptions& opts = {},
                      std::size_t* iterations = nullptr);

/// Harmonic (Reuss) and arithmetic (Voigt) matrix means of the cell matrices.
struct VoigtReuss {
    Mat2 harmonic;
    Mat2 arithmetic;
    bool contains(const Mat2& a, double rel_tol = 1e-8) const;
};
VoigtReuss voigt_reuss(const CoefficientField& field);

/// Node-ordered CSV dump with header "n,r,p".
void write_corrector_csv(std::ostream& os, const CorrectorSolution& w);

/// Defect expansion coefficients of a perturbed periodic law at size n.
///
/// a_1def is the integral form N^2 (A*_N(one defect) - A*_per). Pair terms are
/// stored for every offset of Z_N^2 in the same integral form,
/// N^2 (A*_N({0,d}) - 2 A*_N({0}) + A*_per), and are zero beyond the
/// truncation distance.
struct DefectCoefficients {
    int n = 0;
    int r = 0;
    int order = 1;
    double truncation = 0.0;
    Mat2 a_per_star = Mat2::Zero();
    Mat2 a_1def = Mat2::Zero();
    std::vector<Mat2> a_2def;
    std::size_t solves = 0;
    std::size_t pair_problems = 0;

    Mat2 first_order_delta() const { return a_1def / (static_cast<double>(n) * n); }
    Mat2 pair_delta(int dx, int dy) const;
};

/// A*_N for the periodic material with one defect at cell (ci, cj).
Mat2 one_defect_tensor(const FieldLaw& law, int n, int r, int ci, int cj, const SolverOptions& opts = {});

DefectCoefficients defect_coefficients(const FieldLaw& law, int n, int r, int order,
                                       const SolverOptions& opts = {});

/// Auxiliary integrals for the quasirandom-structure conditions, for the
/// field C0 + X_k C1 with centered Bernoulli X_k. Column p of every matrix
/// is the integral for direction e_p.
struct SqsAuxiliary {
    int n = 0;
    int r = 0;
    int n_big = 0;
    Mat2 c0 = Mat2::Identity();
    Mat2 c1 = Mat2::Zero();
    double bernoulli_p = 0.5;
    /// I^N(d) = int_{Q+d} C1 grad phi^N, d in Z_N^2 stored at dy * n + dx.
    std::vector<Mat2> i_nn;
    /// I^{n_big}(d) on the enlarged box, the proxy for I_d^inf.
    std::vector<Mat2> i_inf;
    /// Right-hand side of the second-order condition, E[X_0^2] I_0^inf.
    Mat2 rhs = Mat2::Zero();
    std::size_t solves = 0;

    Mat2 i_kj(int ki, int kj, int ji, int jj) const;
    Mat2 i_inf_at(int dx, int dy) const;
};

SqsAuxiliary sqs_auxiliary(const Mat2& c0, const Mat2& c1, int n, int r, double bernoulli_p,
                           const SolverOptions& opts = {}, int n_big = 0);

/// (C0, C1, p) of the centered decomposition of a law.
struct SqsDecomposition {
    Mat2 c0;
    Mat2 c1;
    double p;
};
SqsDecomposition sqs_decomposition(const FieldLaw& law);

/// Potential phi^N for a source in cell (ci, cj); exposed for direct checks.
CorrectorSolution sqs_potential(const Mat2& c0, const Mat2& c1, int n, int r, const Vec2& p, int ci, int cj,
                                const SolverOptions& opts = {});

struct SqsConditionValues {
    double s1 = 0.0;
    double s2_residual = 0.0;
    Mat2 s2_lhs = Mat2::Zero();
};

SqsConditionValues sqs_condition_values(const Configuration& cfg, const SqsAuxiliary& aux);

}  // namespace homlab
