#include "homlab/cell_solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace homlab {

namespace {

using Mat4 = Eigen::Matrix4d;

// Reference square [0,1]^2, local nodes 0:(0,0) 1:(1,0) 2:(0,1) 3:(1,1).
Vec2 ref_gradient(int a, double x, double y) {
    switch (a) {
        case 0: return {-(1.0 - y), -(1.0 - x)};
        case 1: return {(1.0 - y), -x};
        case 2: return {-y, (1.0 - x)};
        default: return {y, x};
    }
}

struct ReferenceMatrices {
    Mat4 kxx, kyy, kxy;  // int d_x phi_a d_x phi_b, etc.
    std::array<Vec2, 4> mean_grad;

    ReferenceMatrices() {
        kxx.setZero();
        kyy.setZero();
        kxy.setZero();
        const double g = 0.5 / std::sqrt(3.0);
        const std::array<double, 2> pts{0.5 - g, 0.5 + g};
        for (double x : pts)
            for (double y : pts)
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b) {
                        const Vec2 ga = ref_gradient(a, x, y);
                        const Vec2 gb = ref_gradient(b, x, y);
                        kxx(a, b) += 0.25 * ga.x() * gb.x();
                        kyy(a, b) += 0.25 * ga.y() * gb.y();
                        kxy(a, b) += 0.25 * ga.x() * gb.y();
                    }
        mean_grad = {Vec2{-0.5, -0.5}, Vec2{0.5, -0.5}, Vec2{-0.5, 0.5}, Vec2{0.5, 0.5}};
    }

    Mat4 stiffness(const Mat2& m) const {
        return m(0, 0) * kxx + m(1, 1) * kyy + m(0, 1) * kxy + m(1, 0) * kxy.transpose();
    }
};

const ReferenceMatrices& reference() {
    static const ReferenceMatrices ref;
    return ref;
}

std::array<std::size_t, 4> element_nodes(const PeriodicGrid& g, int a, int b) {
    return {g.node(a, b), g.node(a + 1, b), g.node(a, b + 1), g.node(a + 1, b + 1)};
}

void project_mean_zero(Eigen::VectorXd& v) { v.array() -= v.mean(); }

}  // namespace

CellProblem::CellProblem(const CoefficientField& field, int r) : field_(field), grid_{field.n, r} {
    if (field.n < 1 || r < 1) throw ParameterError("cell problem requires n >= 1 and r >= 1");
    if (field.cells.size() != static_cast<std::size_t>(field.n) * field.n)
        throw DimensionError("coefficient field has the wrong number of cells");
    for (const auto& m : field.cells)
        if (!is_spd(m)) throw EllipticityError("coefficient field cell is not symmetric positive definite");

    const int s = grid_.side();
    const auto& ref = reference();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(16 * grid_.elements());
    for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) {
            const Mat4 k = ref.stiffness(field_.cells[grid_.cell_of_element(a, b)]);
            const auto nodes = element_nodes(grid_, a, b);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) trips.emplace_back(nodes[i], nodes[j], k(i, j));
        }
    const auto dofs = static_cast<Eigen::Index>(grid_.dofs());
    matrix_.resize(dofs, dofs);
    matrix_.setFromTriplets(trips.begin(), trips.end());
    matrix_.makeCompressed();
    inv_diag_ = matrix_.diagonal().cwiseInverse();
}

Eigen::VectorXd CellProblem::corrector_rhs(const Vec2& p) const {
    const int s = grid_.side();
    const double h = grid_.h();
    const auto& ref = reference();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.dofs()));
    for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) {
            const Vec2 flux = field_.cells[grid_.cell_of_element(a, b)] * p;
            const auto nodes = element_nodes(grid_, a, b);
            for (int i = 0; i < 4; ++i) rhs[nodes[i]] -= h * flux.dot(ref.mean_grad[i]);
        }
    return rhs;
}

Eigen::VectorXd CellProblem::cell_source_rhs(const Mat2& m, const Vec2& p, int ci, int cj) const {
    const double h = grid_.h();
    const int r = grid_.r;
    const auto& ref = reference();
    const Vec2 flux = m * p;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.dofs()));
    for (int b = cj * r; b < (cj + 1) * r; ++b)
        for (int a = ci * r; a < (ci + 1) * r; ++a) {
            const auto nodes = element_nodes(grid_, a, b);
            for (int i = 0; i < 4; ++i) rhs[nodes[i]] -= h * flux.dot(ref.mean_grad[i]);
        }
    return rhs;
}

Eigen::VectorXd CellProblem::solve(const Eigen::VectorXd& rhs, const SolverOptions& opts, std::size_t* iterations,
                                   double* residual) const {
    const auto dofs = static_cast<Eigen::Index>(grid_.dofs());
    if (rhs.size() != dofs) throw DimensionError("right-hand side size does not match the grid");
    const std::size_t cap = opts.max_iterations > 0
                                ? opts.max_iterations
                                : static_cast<std::size_t>(50.0 * std::sqrt(static_cast<double>(dofs)));

    Eigen::VectorXd b = rhs;
    project_mean_zero(b);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dofs);
    const double bnorm = b.norm();
    if (iterations) *iterations = 0;
    if (residual) *residual = 0.0;
    if (bnorm == 0.0) return x;

    Eigen::VectorXd r = b;
    Eigen::VectorXd z = inv_diag_.cwiseProduct(r);
    project_mean_zero(z);
    Eigen::VectorXd dir = z;
    Eigen::VectorXd ad(dofs);
    double rz = r.dot(z);
    std::size_t it = 0;
    double rel = 1.0;
    while (it < cap) {
        ++it;
        ad.noalias() = matrix_ * dir;
        const double alpha = rz / dir.dot(ad);
        x.noalias() += alpha * dir;
        r.noalias() -= alpha * ad;
        if (it % 200 == 0) {
            r = b - matrix_ * x;
            project_mean_zero(r);
        }
        rel = r.norm() / bnorm;
        if (rel <= opts.tol) break;
        z = inv_diag_.cwiseProduct(r);
        project_mean_zero(z);
        const double rz_new = r.dot(z);
        dir = z + (rz_new / rz) * dir;
        rz = rz_new;
    }
    project_mean_zero(x);
    Eigen::VectorXd true_r = b - matrix_ * x;
    project_mean_zero(true_r);
    rel = true_r.norm() / bnorm;
    if (iterations) *iterations = it;
    if (residual) *residual = rel;
    if (rel > opts.tol && it >= cap)
        throw SolverError("periodic CG did not converge within the iteration cap", it, rel);
    return x;
}

CorrectorSolution CellProblem::solve_corrector(const Vec2& p, const SolverOptions& opts) const {
    CorrectorSolution w;
    w.grid = grid_;
    w.direction = p;
    w.values = solve(corrector_rhs(p), opts, &w.iterations, &w.residual);
    return w;
}

Vec2 CellProblem::element_gradient(const Eigen::VectorXd& values, int a, int b) const {
    const auto& ref = reference();
    const auto nodes = element_nodes(grid_, a, b);
    Vec2 g = Vec2::Zero();
    for (int i = 0; i < 4; ++i) g += values[nodes[i]] * ref.mean_grad[i];
    return g / grid_.h();
}

Vec2 CellProblem::cell_gradient_integral(const Eigen::VectorXd& values, int ci, int cj) const {
    const int r = grid_.r;
    const double h2 = grid_.h() * grid_.h();
    Vec2 total = Vec2::Zero();
    ci = ((ci % grid_.n) + grid_.n) % grid_.n;
    cj = ((cj % grid_.n) + grid_.n) % grid_.n;
    for (int b = cj * r; b < (cj + 1) * r; ++b)
        for (int a = ci * r; a < (ci + 1) * r; ++a) total += h2 * element_gradient(values, a, b);
    return total;
}

Mat2 CellProblem::tensor(const CorrectorSolution& w1, const CorrectorSolution& w2) const {
    if (!(w1.grid == grid_) || !(w2.grid == grid_))
        throw DimensionError("correctors were solved on a different grid");
    const int s = grid_.side();
    const double h2 = grid_.h() * grid_.h();
    Mat2 sum = Mat2::Zero();
    for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) {
            const Mat2& m = field_.cells[grid_.cell_of_element(a, b)];
            sum.col(0) += h2 * m * (w1.direction + element_gradient(w1.values, a, b));
            sum.col(1) += h2 * m * (w2.direction + element_gradient(w2.values, a, b));
        }
    return sum / (static_cast<double>(grid_.n) * grid_.n);
}

double CellProblem::energy(const CorrectorSolution& w) const {
    const int s = grid_.side();
    const double h2 = grid_.h() * grid_.h();
    const auto& ref = reference();
    double total = 0.0;
    for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) {
            const Mat2& m = field_.cells[grid_.cell_of_element(a, b)];
            const auto nodes = element_nodes(grid_, a, b);
            Eigen::Vector4d we;
            for (int i = 0; i < 4; ++i) we[i] = w.values[nodes[i]];
            const Vec2 g = element_gradient(w.values, a, b);
            total += h2 * w.direction.dot(m * w.direction) + 2.0 * h2 * w.direction.dot(m * g) +
                     we.dot(ref.stiffness(m) * we);
        }
    return total / (static_cast<double>(grid_.n) * grid_.n);
}

CorrectorSolution solve_corrector(const CoefficientField& field, const Vec2& p, int r, const SolverOptions& opts) {
    return CellProblem(field, r).solve_corrector(p, opts);
}

Mat2 homogenized_tensor(const CoefficientField& field, std::span<const CorrectorSolution> w) {
    if (w.size() != 2) throw DimensionError("homogenized_tensor expects one corrector per direction");
    const PeriodicGrid& g = w[0].grid;
    if (g.n != field.n) throw DimensionError("corrector grid does not match the field size");
    CellProblem problem(field, g.r);
    return problem.tensor(w[0], w[1]);
}

Mat2 effective_tensor(const CoefficientField& field, int r, const SolverOptions& opts, std::size_t* iterations) {
    CellProblem problem(field, r);
    const auto w1 = problem.solve_corrector(Vec2::UnitX(), opts);
    const auto w2 = problem.solve_corrector(Vec2::UnitY(), opts);
    if (iterations) *iterations = w1.iterations + w2.iterations;
    return problem.tensor(w1, w2);
}

bool VoigtReuss::contains(const Mat2& a, double rel_tol) const {
    const Mat2 sym = 0.5 * (a + a.transpose());
    const double scale = rel_tol * std::max(1.0, sym.norm());
    return min_eigenvalue(sym - harmonic) >= -scale && min_eigenvalue(arithmetic - sym) >= -scale;
}

VoigtReuss voigt_reuss(const CoefficientField& field) {
    Mat2 mean = Mat2::Zero();
    Mat2 inv_mean = Mat2::Zero();
    for (const auto& m : field.cells) {
        mean += m;
        inv_mean += m.inverse();
    }
    const double count = static_cast<double>(field.cells.size());
    return {(inv_mean / count).inverse(), mean / count};
}

void write_corrector_csv(std::ostream& os, const CorrectorSolution& w) {
    os.precision(17);
    os << "n,r,p\n" << w.grid.n << ',' << w.grid.r << ',' << w.direction.x() << ' ' << w.direction.y() << '\n';
    os << "node,a,b,value\n";
    const int s = w.grid.side();
    for (int b = 0; b < s; ++b)
        for (int a = 0; a < s; ++a) {
            const auto k = w.grid.node(a, b);
            os << k << ',' << a << ',' << b << ',' << w.values[static_cast<Eigen::Index>(k)] << '\n';
        }
}

// ---------------------------------------------------------------------------
// Defect expansion

namespace {

int wrap(int v, int n) { return ((v % n) + n) % n; }

int minimal_image(int v, int n) {
    v = wrap(v, n);
    return 2 * v > n ? v - n : v;
}

Mat2 defect_tensor(const FieldLaw& law, int n, int r, const std::vector<std::pair<int, int>>& defects,
                   const SolverOptions& opts) {
    CoefficientField field = CoefficientField::constant(n, law.a_per);
    const Mat2 perturbed = law.a_per + law.c_per;
    for (auto [i, j] : defects) field.cells[static_cast<std::size_t>(wrap(j, n)) * n + wrap(i, n)] = perturbed;
    return effective_tensor(field, r, opts);
}

std::vector<Mat2> lattice_symmetries(const Mat2& a, const Mat2& c) {
    std::vector<Mat2> out;
    for (int swap = 0; swap < 2; ++swap)
        for (int s1 : {1, -1})
            for (int s2 : {1, -1}) {
                Mat2 g = Mat2::Zero();
                if (swap) {
                    g(0, 1) = s1;
                    g(1, 0) = s2;
                } else {
                    g(0, 0) = s1;
                    g(1, 1) = s2;
                }
                const bool keeps_a = (g * a * g.transpose() - a).norm() <= 1e-12 * (1.0 + a.norm());
                const bool keeps_c = (g * c * g.transpose() - c).norm() <= 1e-12 * (1.0 + c.norm());
                const bool inversion = !swap && s1 == -1 && s2 == -1;
                if ((keeps_a && keeps_c) || inversion) out.push_back(g);
            }
    return out;
}

}  // namespace

Mat2 DefectCoefficients::pair_delta(int dx, int dy) const {
    if (a_2def.empty()) return Mat2::Zero();
    return a_2def[static_cast<std::size_t>(wrap(dy, n)) * n + wrap(dx, n)] / (static_cast<double>(n) * n);
}

Mat2 one_defect_tensor(const FieldLaw& law, int n, int r, int ci, int cj, const SolverOptions& opts) {
    if (law.kind != LawKind::PerturbedPeriodic) throw ParameterError("defect problems need a perturbed periodic law");
    law.validate();
    return defect_tensor(law, n, r, {{ci, cj}}, opts);
}

DefectCoefficients defect_coefficients(const FieldLaw& law, int n, int r, int order, const SolverOptions& opts) {
    if (law.kind != LawKind::PerturbedPeriodic) throw ParameterError("defect problems need a perturbed periodic law");
    law.validate();
    if (n < 2) throw ParameterError("defect problems need n >= 2");
    if (order != 1 && order != 2) throw ParameterError("defect expansion order must be 1 or 2");

    DefectCoefficients out;
    out.n = n;
    out.r = r;
    out.order = order;
    out.truncation = 0.5 * n;
    const double volume = static_cast<double>(n) * n;

    out.a_per_star = effective_tensor(CoefficientField::constant(1, law.a_per), r, opts);
    const Mat2 one = defect_tensor(law, n, r, {{0, 0}}, opts);
    out.a_1def = volume * (one - out.a_per_star);
    out.solves = 4;
    if (order == 1) return out;

    const auto group = lattice_symmetries(law.a_per, law.c_per);
    out.a_2def.assign(static_cast<std::size_t>(n) * n, Mat2::Zero());
    std::vector<bool> filled(static_cast<std::size_t>(n) * n, false);
    filled[0] = true;
    for (int cy = 0; cy < n; ++cy)
        for (int cx = 0; cx < n; ++cx) {
            const std::size_t idx = static_cast<std::size_t>(cy) * n + cx;
            if (filled[idx]) continue;
            const int mx = minimal_image(cx, n);
            const int my = minimal_image(cy, n);
            if (std::hypot(mx, my) > out.truncation + 1e-12) {
                filled[idx] = true;
                continue;
            }
            const Mat2 pair = defect_tensor(law, n, r, {{0, 0}, {cx, cy}}, opts);
            out.solves += 2;
            ++out.pair_problems;
            const Mat2 delta = volume * (pair - 2.0 * one + out.a_per_star);
            for (const Mat2& g : group) {
                const Vec2 d = g * Vec2(mx, my);
                const std::size_t k = static_cast<std::size_t>(wrap(static_cast<int>(std::lround(d.y())), n)) * n +
                                      wrap(static_cast<int>(std::lround(d.x())), n);
                if (filled[k]) continue;
                out.a_2def[k] = g * delta * g.transpose();
                filled[k] = true;
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Quasirandom-structure auxiliaries

Mat2 SqsAuxiliary::i_kj(int ki, int kj, int ji, int jj) const {
    return i_nn[static_cast<std::size_t>(wrap(jj - kj, n)) * n + wrap(ji - ki, n)];
}

Mat2 SqsAuxiliary::i_inf_at(int dx, int dy) const {
    return i_inf[static_cast<std::size_t>(wrap(dy, n_big)) * n_big + wrap(dx, n_big)];
}

CorrectorSolution sqs_potential(const Mat2& c0, const Mat2& c1, int n, int r, const Vec2& p, int ci, int cj,
                                const SolverOptions& opts) {
    if (!is_spd(c0)) throw EllipticityError("C0 must be symmetric positive definite");
    CellProblem problem(CoefficientField::constant(n, c0), r);
    CorrectorSolution phi;
    phi.grid = problem.grid();
    phi.direction = p;
    phi.values = problem.solve(problem.cell_source_rhs(c1, p, ci, cj), opts, &phi.iterations, &phi.residual);
    return phi;
}

namespace {

std::vector<Mat2> cell_integrals(const Mat2& c0, const Mat2& c1, int n, int r, const SolverOptions& opts) {
    CellProblem problem(CoefficientField::constant(n, c0), r);
    std::vector<Mat2> out(static_cast<std::size_t>(n) * n, Mat2::Zero());
    for (int col = 0; col < 2; ++col) {
        const Vec2 p = col == 0 ? Vec2::UnitX() : Vec2::UnitY();
        const Eigen::VectorXd phi = problem.solve(problem.cell_source_rhs(c1, p, 0, 0), opts);
        for (int dy = 0; dy < n; ++dy)
            for (int dx = 0; dx < n; ++dx)
                out[static_cast<std::size_t>(dy) * n + dx].col(col) =
                    c1 * problem.cell_gradient_integral(phi, dx, dy);
    }
    return out;
}

}  // namespace

SqsAuxiliary sqs_auxiliary(const Mat2& c0, const Mat2& c1, int n, int r, double bernoulli_p,
                           const SolverOptions& opts, int n_big) {
    if (!is_spd(c0)) throw EllipticityError("C0 must be symmetric positive definite");
    if (n < 1 || r < 1) throw ParameterError("auxiliary integrals need n >= 1 and r >= 1");
    if (!(bernoulli_p >= 0.0 && bernoulli_p <= 1.0)) throw ParameterError("probability must lie in [0, 1]");
    SqsAuxiliary aux;
    aux.n = n;
    aux.r = r;
    aux.n_big = n_big > 0 ? n_big : std::max(3 * n, 24);
    aux.c0 = c0;
    aux.c1 = c1;
    aux.bernoulli_p = bernoulli_p;
    aux.i_nn = cell_integrals(c0, c1, n, r, opts);
    aux.i_inf = cell_integrals(c0, c1, aux.n_big, r, opts);
    aux.solves = 4;
    aux.rhs = bernoulli_p * (1.0 - bernoulli_p) * aux.i_inf[0];
    return aux;
}

SqsDecomposition sqs_decomposition(const FieldLaw& law) {
    law.validate();
    if (law.kind == LawKind::Checkerboard)
        return {0.5 * (law.alpha + law.beta) * Mat2::Identity(), (law.beta - law.alpha) * Mat2::Identity(), 0.5};
    return {law.a_per + law.eta * law.c_per, law.c_per, law.eta};
}

SqsConditionValues sqs_condition_values(const Configuration& cfg, const SqsAuxiliary& aux) {
    if (cfg.n != aux.n) throw DimensionError("configuration size does not match the auxiliary integrals");
    const int n = cfg.n;
    const double volume = static_cast<double>(n) * n;
    SqsConditionValues out;
    out.s1 = (static_cast<double>(cfg.ones()) - aux.bernoulli_p * volume) / volume;

    std::vector<double> x(cfg.draws.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = cfg.draws[k] - aux.bernoulli_p;
    Mat2 lhs = Mat2::Zero();
    for (int dy = 0; dy < n; ++dy)
        for (int dx = 0; dx < n; ++dx) {
            double corr = 0.0;
            for (int kj = 0; kj < n; ++kj)
                for (int ki = 0; ki < n; ++ki)
                    corr += x[static_cast<std::size_t>(kj) * n + ki] *
                            x[static_cast<std::size_t>((kj + dy) % n) * n + (ki + dx) % n];
            lhs += corr * aux.i_nn[static_cast<std::size_t>(dy) * n + dx];
        }
    out.s2_lhs = lhs / volume;
    out.s2_residual = (out.s2_lhs - aux.rhs).norm();
    return out;
}

}  // namespace homlab
