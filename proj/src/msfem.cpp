#include "homlab/msfem.hpp"

#include "homlab/parallel.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/SparseCholesky>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace homlab {

namespace {

using Triplet = Eigen::Triplet<double>;

// Q1 stiffness of -Laplace on a square, node order (0,0), (1,0), (1,1), (0,1).
constexpr double kQ1[4][4] = {{4.0 / 6, -1.0 / 6, -2.0 / 6, -1.0 / 6},
                              {-1.0 / 6, 4.0 / 6, -1.0 / 6, -2.0 / 6},
                              {-2.0 / 6, -1.0 / 6, 4.0 / 6, -1.0 / 6},
                              {-1.0 / 6, -2.0 / 6, -1.0 / 6, 4.0 / 6}};

constexpr int kCornerA[4] = {0, 1, 1, 0};
constexpr int kCornerB[4] = {0, 0, 1, 1};

const double kGauss[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};

void shape(double xi, double eta, double n[4], double dxi[4], double deta[4]) {
    n[0] = (1 - xi) * (1 - eta);
    n[1] = xi * (1 - eta);
    n[2] = xi * eta;
    n[3] = (1 - xi) * eta;
    dxi[0] = -(1 - eta);
    dxi[1] = 1 - eta;
    dxi[2] = eta;
    dxi[3] = -eta;
    deta[0] = -(1 - xi);
    deta[1] = -xi;
    deta[2] = xi;
    deta[3] = 1 - xi;
}

std::vector<int> edge_nodes(const GridBlock& g, int local) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(g.side()));
    for (int t = 0; t <= g.cells; ++t) {
        switch (local) {
            case 0: out.push_back(g.node(t, 0)); break;
            case 1: out.push_back(g.node(g.cells, t)); break;
            case 2: out.push_back(g.node(t, g.cells)); break;
            default: out.push_back(g.node(0, t)); break;
        }
    }
    return out;
}

// Rows and columns mapped through the index maps; unmapped entries are dropped.
SpMat select(const SpMat& K, const std::vector<int>& rmap, int rows, const std::vector<int>& cmap, int cols) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(K.nonZeros()));
    for (int c = 0; c < K.outerSize(); ++c) {
        if (cmap[c] < 0) continue;
        for (SpMat::InnerIterator it(K, c); it; ++it)
            if (rmap[it.row()] >= 0) t.emplace_back(rmap[it.row()], cmap[c], it.value());
    }
    SpMat out(rows, cols);
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

GridBlock element_block(const CoarseMesh& mesh, int fine_n, int e) {
    const int i = e % mesh.k(), j = e / mesh.k();
    return GridBlock{mesh.k() * fine_n, i * fine_n, j * fine_n, fine_n};
}

std::string element_label(const CoarseMesh& mesh, int e) {
    std::ostringstream os;
    os << "element (" << e % mesh.k() << ", " << e / mesh.k() << ")";
    return os.str();
}

// All free (not on the boundary of D) fine nodes of an internal edge lie inside the perforations.
bool edge_inside(const CoarseMesh& mesh, int fine_n, const PerforationSet& perf, int e) {
    const auto& ed = mesh.edge(e);
    const int N = mesh.k() * fine_n;
    for (int t = 0; t <= fine_n; ++t) {
        const int gi = ed.vertical ? ed.i * fine_n : ed.i * fine_n + t;
        const int gj = ed.vertical ? ed.j * fine_n + t : ed.j * fine_n;
        if (gi == 0 || gi == N || gj == 0 || gj == N) continue;
        if (!perf.contains(static_cast<double>(gi) / N, static_cast<double>(gj) / N)) return false;
    }
    return true;
}

void check_space_inputs(const CoarseMesh& mesh, const PerforationSet& perf, int fine_n, std::vector<std::string>& warnings) {
    if (fine_n < 2) throw ParameterError("fine_n must be at least 2");
    (void)mesh;
    for (auto& w : perf.resolution_warnings(1.0 / (mesh.k() * fine_n))) warnings.push_back(w);
}

}  // namespace

SpMat block_stiffness(const GridBlock& g, const PerforationSet& perf, double kappa) {
    const auto inside = block_inside(g, perf);
    const double penalty = kappa * g.h() * g.h() / 4.0;
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(g.cells) * g.cells * 20);
    for (int b = 0; b < g.cells; ++b)
        for (int a = 0; a < g.cells; ++a) {
            int idx[4];
            for (int c = 0; c < 4; ++c) idx[c] = g.node(a + kCornerA[c], b + kCornerB[c]);
            for (int r = 0; r < 4; ++r) {
                for (int c = 0; c < 4; ++c) t.emplace_back(idx[r], idx[c], kQ1[r][c]);
                if (inside[idx[r]]) t.emplace_back(idx[r], idx[r], penalty);
            }
        }
    SpMat K(g.nodes(), g.nodes());
    K.setFromTriplets(t.begin(), t.end());
    return K;
}

Eigen::VectorXd block_load(const GridBlock& g, const Source& f) {
    Eigen::VectorXd l = Eigen::VectorXd::Zero(g.nodes());
    const double h = g.h(), w = h * h / 4.0;
    double n[4], dx[4], dy[4];
    for (int b = 0; b < g.cells; ++b)
        for (int a = 0; a < g.cells; ++a)
            for (double gy : kGauss)
                for (double gx : kGauss) {
                    shape(gx, gy, n, dx, dy);
                    const double fv = f(g.x(a) + gx * h, g.y(b) + gy * h) * w;
                    for (int c = 0; c < 4; ++c) l[g.node(a + kCornerA[c], b + kCornerB[c])] += fv * n[c];
                }
    return l;
}

std::vector<char> block_inside(const GridBlock& g, const PerforationSet& perf) {
    std::vector<char> in(static_cast<std::size_t>(g.nodes()));
    for (int b = 0; b <= g.cells; ++b)
        for (int a = 0; a <= g.cells; ++a) in[g.node(a, b)] = perf.contains(g.x(a), g.y(b)) ? 1 : 0;
    return in;
}

double default_kappa(double h) { return 1e8 / (h * h); }

FineSolution reference_solve(const PerforationSet& perf, const Source& f, int fine_n, double kappa, bool strict) {
    if (fine_n < 2) throw ParameterError("reference resolution must be at least 2");
    FineSolution out;
    out.n = fine_n;
    out.perf = perf;
    out.kappa = kappa > 0.0 ? kappa : default_kappa(1.0 / fine_n);
    out.warnings = perf.resolution_warnings(1.0 / fine_n);
    if (strict && !out.warnings.empty()) throw GeometryError(out.warnings.front());

    const GridBlock g{fine_n, 0, 0, fine_n};
    std::vector<int> map(static_cast<std::size_t>(g.nodes()), -1);
    int unknowns = 0;
    for (int b = 1; b < fine_n; ++b)
        for (int a = 1; a < fine_n; ++a) map[g.node(a, b)] = unknowns++;
    const SpMat K = select(block_stiffness(g, perf, out.kappa), map, unknowns, map, unknowns);
    const Eigen::VectorXd load = block_load(g, f);
    Eigen::VectorXd rhs(unknowns);
    for (int i = 0; i < g.nodes(); ++i)
        if (map[i] >= 0) rhs[map[i]] = load[i];

    Eigen::CholmodSupernodalLLT<SpMat> chol;
    chol.compute(K);
    if (chol.info() != Eigen::Success) throw SolverError("reference factorization failed", 0, NAN);
    const Eigen::VectorXd x = chol.solve(rhs);
    const double rn = rhs.norm();
    const double res = rn > 0.0 ? (K * x - rhs).norm() / rn : 0.0;
    if (chol.info() != Eigen::Success || !std::isfinite(res) || res > 1e-6)
        throw SolverError("reference solve did not converge", 1, res);

    out.values = Eigen::VectorXd::Zero(g.nodes());
    for (int i = 0; i < g.nodes(); ++i)
        if (map[i] >= 0) out.values[i] = x[map[i]];
    return out;
}

CoarseMesh::CoarseMesh(int k) : k_(k) {
    if (k < 1) throw ParameterError("coarse mesh needs at least one element per side");
    for (int i = 1; i < k; ++i)
        for (int j = 0; j < k; ++j) edges_.push_back(Edge{true, i, j, {element(i - 1, j), element(i, j)}});
    for (int j = 1; j < k; ++j)
        for (int i = 0; i < k; ++i) edges_.push_back(Edge{false, i, j, {element(i, j - 1), element(i, j)}});
}

CoarseMesh CoarseMesh::uniform(double H) {
    if (!(H > 0.0) || H > 1.0) throw ParameterError("coarse mesh size H must lie in (0, 1]");
    const double k = std::round(1.0 / H);
    if (std::abs(k * H - 1.0) > 1e-9) throw ParameterError("1/H must be an integer");
    return CoarseMesh(static_cast<int>(k));
}

int CoarseMesh::element_edge(int i, int j, int local) const {
    switch (local) {
        case 0: return j == 0 ? -1 : (k_ - 1) * k_ + (j - 1) * k_ + i;
        case 1: return i == k_ - 1 ? -1 : i * k_ + j;
        case 2: return j == k_ - 1 ? -1 : (k_ - 1) * k_ + j * k_ + i;
        default: return i == 0 ? -1 : (i - 1) * k_ + j;
    }
}

int CoarseMesh::interior_vertex(int i, int j) const {
    if (i <= 0 || j <= 0 || i >= k_ || j >= k_) return -1;
    return (j - 1) * (k_ - 1) + (i - 1);
}

std::string to_string(MsMethod m) {
    switch (m) {
        case MsMethod::CrouzeixRaviart: return "cr";
        case MsMethod::MsFEMLinear: return "linear";
        case MsMethod::CoarseQ1: return "q1";
    }
    return "?";
}

MsMethod parse_method(const std::string& name) {
    if (name == "cr") return MsMethod::CrouzeixRaviart;
    if (name == "linear") return MsMethod::MsFEMLinear;
    if (name == "q1") return MsMethod::CoarseQ1;
    throw ParameterError("unknown method '" + name + "' (expected cr, linear or q1)");
}

int default_fine_n(const CoarseMesh& mesh, const PerforationSet& perf) {
    double narrowest = 1.0;
    switch (perf.kind()) {
        case PerforationKind::None: break;
        case PerforationKind::PeriodicDiscs:
        case PerforationKind::ShiftedPeriodicDiscs: narrowest = 2.0 * perf.radius(); break;
        case PerforationKind::RandomRectangles:
            for (const auto& r : perf.rects()) narrowest = std::min({narrowest, r.width, r.height});
            break;
    }
    const double h_max = narrowest / 4.0;
    int n = 32;
    while (mesh.H() / n > h_max) n *= 2;
    return n;
}

MsFEMSpace build_cr_space(const CoarseMesh& mesh, const PerforationSet& perf, int fine_n, double kappa,
                          bool with_bubbles, int threads) {
    MsFEMSpace s;
    s.method = MsMethod::CrouzeixRaviart;
    s.mesh = mesh;
    s.perf = perf;
    s.fine_n = fine_n;
    s.with_bubbles = with_bubbles;
    check_space_inputs(mesh, perf, fine_n, s.warnings);
    s.kappa = kappa > 0.0 ? kappa : default_kappa(mesh.H() / fine_n);

    s.edge_dof.assign(static_cast<std::size_t>(mesh.internal_edge_count()), -1);
    for (int e = 0; e < mesh.internal_edge_count(); ++e)
        if (!edge_inside(mesh, fine_n, perf, e)) s.edge_dof[e] = s.dof_count++;

    const int ne = mesh.element_count();
    s.elements.resize(static_cast<std::size_t>(ne));
    s.bubble_dof.assign(static_cast<std::size_t>(ne), -1);
    std::vector<char> elem_inside(static_cast<std::size_t>(ne), 0);
    for (int e = 0; e < ne; ++e) {
        const GridBlock g = element_block(mesh, fine_n, e);
        const auto in = block_inside(g, perf);
        bool all = true;
        for (int b = 0; b <= g.cells && all; ++b)
            for (int a = 0; a <= g.cells && all; ++a)
                if (!g.on_domain_boundary(a, b) && !in[g.node(a, b)]) all = false;
        elem_inside[e] = all;
    }
    if (with_bubbles)
        for (int e = 0; e < ne; ++e)
            if (!elem_inside[e]) s.bubble_dof[e] = s.dof_count++;

    std::vector<std::size_t> solves(static_cast<std::size_t>(ne), 0);
    parallel_for(static_cast<std::size_t>(ne), threads, [&](std::size_t idx) {
        const int e = static_cast<int>(idx);
        const int ei = e % mesh.k(), ej = e / mesh.k();
        ElementSpace& es = s.elements[idx];
        es.grid = element_block(mesh, fine_n, e);
        es.stiffness = block_stiffness(es.grid, perf, s.kappa);
        es.inside_perforation = elem_inside[e];
        if (es.inside_perforation) return;

        const GridBlock& g = es.grid;
        std::vector<int> map(static_cast<std::size_t>(g.nodes()), -1);
        int nf = 0;
        for (int b = 0; b <= g.cells; ++b)
            for (int a = 0; a <= g.cells; ++a)
                if (!g.on_domain_boundary(a, b)) map[g.node(a, b)] = nf++;

        struct Constraint {
            int global_edge;
            std::vector<int> nodes;
        };
        std::vector<Constraint> cons;
        for (int l = 0; l < 4; ++l) {
            const int ge = mesh.element_edge(ei, ej, l);
            if (ge >= 0) cons.push_back({ge, edge_nodes(g, l)});
        }
        const int m = static_cast<int>(cons.size());

        std::vector<Triplet> t;
        t.reserve(static_cast<std::size_t>(es.stiffness.nonZeros()) + 4 * g.side() * 2);
        for (int c = 0; c < es.stiffness.outerSize(); ++c) {
            if (map[c] < 0) continue;
            for (SpMat::InnerIterator it(es.stiffness, c); it; ++it)
                if (map[it.row()] >= 0) t.emplace_back(map[it.row()], map[c], it.value());
        }
        // Constraint rows hold trapezoid weights divided by h, so the targets scale by 1/h.
        for (int r = 0; r < m; ++r) {
            const auto& nodes = cons[r].nodes;
            for (std::size_t q = 0; q < nodes.size(); ++q) {
                const int col = map[nodes[q]];
                if (col < 0) continue;
                const double w = (q == 0 || q + 1 == nodes.size()) ? 0.5 : 1.0;
                t.emplace_back(nf + r, col, w);
                t.emplace_back(col, nf + r, w);
            }
        }
        SpMat S(nf + m, nf + m);
        S.setFromTriplets(t.begin(), t.end());
        S.makeCompressed();
        Eigen::UmfPackLU<SpMat> lu;
        lu.compute(S);
        if (lu.info() != Eigen::Success)
            throw LocalSolveError("singular local saddle system on " + element_label(mesh, e), 0, NAN);

        auto expand = [&](const Eigen::VectorXd& x) {
            Eigen::VectorXd v = Eigen::VectorXd::Zero(g.nodes());
            for (int i = 0; i < g.nodes(); ++i)
                if (map[i] >= 0) v[i] = x[map[i]];
            return v;
        };
        auto solve = [&](const Eigen::VectorXd& rhs, const std::string& what) {
            Eigen::VectorXd x = lu.solve(rhs);
            if (lu.info() != Eigen::Success || !x.allFinite())
                throw LocalSolveError("local solve failed for " + what, 1, NAN);
            ++solves[idx];
            return expand(x);
        };

        for (int r = 0; r < m; ++r) {
            const int dof = s.edge_dof[cons[r].global_edge];
            if (dof < 0) continue;
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + m);
            rhs[nf + r] = 1.0 / g.h();
            es.basis.push_back({dof, solve(rhs, "edge " + std::to_string(cons[r].global_edge) + " on " +
                                                    element_label(mesh, e))});
        }
        if (s.bubble_dof[e] >= 0) {
            const Eigen::VectorXd load = block_load(g, [](double, double) { return 1.0; });
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + m);
            for (int i = 0; i < g.nodes(); ++i)
                if (map[i] >= 0) rhs[map[i]] = load[i];
            es.basis.push_back({s.bubble_dof[e], solve(rhs, "bubble on " + element_label(mesh, e))});
        }
    });
    for (auto c : solves) s.local_solves += c;
    return s;
}

MsFEMSpace build_baseline_space(const CoarseMesh& mesh, const PerforationSet& perf, MsMethod method,
                                bool with_bubbles, int fine_n, double kappa, int threads) {
    if (method == MsMethod::CrouzeixRaviart) return build_cr_space(mesh, perf, fine_n, kappa, with_bubbles, threads);
    MsFEMSpace s;
    s.method = method;
    s.mesh = mesh;
    s.perf = perf;
    s.fine_n = fine_n;
    s.with_bubbles = with_bubbles;
    check_space_inputs(mesh, perf, fine_n, s.warnings);
    s.kappa = kappa > 0.0 ? kappa : default_kappa(mesh.H() / fine_n);

    s.vertex_dof.resize(static_cast<std::size_t>(mesh.interior_vertex_count()));
    for (auto& v : s.vertex_dof) v = s.dof_count++;

    const int ne = mesh.element_count();
    s.elements.resize(static_cast<std::size_t>(ne));
    s.bubble_dof.assign(static_cast<std::size_t>(ne), -1);
    std::vector<char> interior_inside(static_cast<std::size_t>(ne), 0);
    for (int e = 0; e < ne; ++e) {
        const GridBlock g = element_block(mesh, fine_n, e);
        const auto in = block_inside(g, perf);
        bool all = true;
        for (int b = 1; b < g.cells && all; ++b)
            for (int a = 1; a < g.cells && all; ++a)
                if (!in[g.node(a, b)]) all = false;
        interior_inside[e] = all;
        if (with_bubbles && !all) s.bubble_dof[e] = s.dof_count++;
    }

    std::vector<std::size_t> solves(static_cast<std::size_t>(ne), 0);
    parallel_for(static_cast<std::size_t>(ne), threads, [&](std::size_t idx) {
        const int e = static_cast<int>(idx);
        const int ei = e % mesh.k(), ej = e / mesh.k();
        ElementSpace& es = s.elements[idx];
        es.grid = element_block(mesh, fine_n, e);
        es.stiffness = block_stiffness(es.grid, perf, s.kappa);
        es.inside_perforation = interior_inside[e];
        const GridBlock& g = es.grid;
        const int c = g.cells;

        std::vector<int> imap(static_cast<std::size_t>(g.nodes()), -1), bmap(static_cast<std::size_t>(g.nodes()), -1);
        int ni = 0, nb = 0;
        for (int b = 0; b <= c; ++b)
            for (int a = 0; a <= c; ++a) {
                const bool boundary = a == 0 || b == 0 || a == c || b == c;
                (boundary ? bmap : imap)[g.node(a, b)] = boundary ? nb++ : ni++;
            }

        const bool need_solver = method == MsMethod::MsFEMLinear || s.bubble_dof[e] >= 0;
        Eigen::SimplicialLDLT<SpMat> ldlt;
        SpMat Kib;
        if (need_solver) {
            ldlt.compute(select(es.stiffness, imap, ni, imap, ni));
            if (ldlt.info() != Eigen::Success)
                throw LocalSolveError("local factorization failed on " + element_label(mesh, e), 0, NAN);
            Kib = select(es.stiffness, imap, ni, bmap, nb);
        }
        auto solve = [&](const Eigen::VectorXd& rhs, const std::string& what) {
            Eigen::VectorXd x = ldlt.solve(rhs);
            if (ldlt.info() != Eigen::Success || !x.allFinite())
                throw LocalSolveError("local solve failed for " + what, 1, NAN);
            ++solves[idx];
            return x;
        };

        for (int corner = 0; corner < 4; ++corner) {
            const int ci = kCornerA[corner], cj = kCornerB[corner];
            const int v = mesh.interior_vertex(ei + ci, ej + cj);
            if (v < 0) continue;
            Eigen::VectorXd hat(g.nodes());
            for (int b = 0; b <= c; ++b)
                for (int a = 0; a <= c; ++a) {
                    const double sx = ci ? static_cast<double>(a) / c : 1.0 - static_cast<double>(a) / c;
                    const double sy = cj ? static_cast<double>(b) / c : 1.0 - static_cast<double>(b) / c;
                    hat[g.node(a, b)] = sx * sy;
                }
            if (method == MsMethod::MsFEMLinear) {
                Eigen::VectorXd ub(nb);
                for (int i = 0; i < g.nodes(); ++i)
                    if (bmap[i] >= 0) ub[bmap[i]] = hat[i];
                const Eigen::VectorXd ui = solve(-(Kib * ub), "vertex function on " + element_label(mesh, e));
                for (int i = 0; i < g.nodes(); ++i)
                    if (imap[i] >= 0) hat[i] = ui[imap[i]];
            }
            es.basis.push_back({s.vertex_dof[v], std::move(hat)});
        }
        if (s.bubble_dof[e] >= 0) {
            const Eigen::VectorXd load = block_load(g, [](double, double) { return 1.0; });
            Eigen::VectorXd rhs(ni);
            for (int i = 0; i < g.nodes(); ++i)
                if (imap[i] >= 0) rhs[imap[i]] = load[i];
            const Eigen::VectorXd ui = solve(rhs, "bubble on " + element_label(mesh, e));
            Eigen::VectorXd v = Eigen::VectorXd::Zero(g.nodes());
            for (int i = 0; i < g.nodes(); ++i)
                if (imap[i] >= 0) v[i] = ui[imap[i]];
            es.basis.push_back({s.bubble_dof[e], std::move(v)});
        }
    });
    for (auto c : solves) s.local_solves += c;
    return s;
}

namespace {

// Element contributions in element order, so the reduction is deterministic.
void assemble(const MsFEMSpace& space, const Source* f, SpMat& A, Eigen::VectorXd& F) {
    std::vector<Triplet> t;
    F = Eigen::VectorXd::Zero(space.dof_count);
    for (const ElementSpace& es : space.elements) {
        if (es.basis.empty()) continue;
        const Eigen::VectorXd l = f ? block_load(es.grid, *f) : Eigen::VectorXd();
        for (const auto& bi : es.basis) {
            const Eigen::VectorXd Ku = es.stiffness * bi.values;
            for (const auto& bj : es.basis) t.emplace_back(bj.dof, bi.dof, bj.values.dot(Ku));
            if (f) F[bi.dof] += bi.values.dot(l);
        }
    }
    A.resize(space.dof_count, space.dof_count);
    A.setFromTriplets(t.begin(), t.end());
}

}  // namespace

SpMat coarse_matrix(const MsFEMSpace& space) {
    SpMat A;
    Eigen::VectorXd F;
    assemble(space, nullptr, A, F);
    return A;
}

CoarseSolution msfem_solve(const MsFEMSpace& space, const Source& f) {
    if (space.dof_count == 0) throw AssemblyError("no basis function survives the perforations", 0, NAN);
    const int ne = space.mesh.element_count();
    SpMat A;
    Eigen::VectorXd F;
    assemble(space, &f, A, F);

    // Symmetric Jacobi scaling: penalized and unpenalized basis functions differ by many orders of magnitude.
    const Eigen::VectorXd diag = A.diagonal();
    if (diag.minCoeff() <= 0.0) throw AssemblyError("basis function with zero energy", 0, diag.minCoeff());
    const Eigen::VectorXd scale = diag.cwiseSqrt().cwiseInverse();
    const SpMat As = scale.asDiagonal() * A * scale.asDiagonal();
    Eigen::SimplicialLDLT<SpMat> ldlt;
    ldlt.compute(As);
    if (ldlt.info() != Eigen::Success) throw AssemblyError("coarse factorization failed", 0, NAN);
    const Eigen::VectorXd d = ldlt.vectorD();
    if (d.minCoeff() <= 1e-12) throw AssemblyError("singular coarse matrix", 0, d.minCoeff());

    CoarseSolution out;
    out.method = space.method;
    out.with_bubbles = space.with_bubbles;
    out.dofs = space.dof_count;
    out.solves = space.local_solves;
    out.coefficients = scale.cwiseProduct(ldlt.solve(scale.cwiseProduct(F)));
    const double fn = F.norm();
    out.galerkin_residual = fn > 0.0 ? (A * out.coefficients - F).norm() / fn : 0.0;

    out.field.mesh = space.mesh;
    out.field.fine_n = space.fine_n;
    out.field.values.resize(static_cast<std::size_t>(ne));
    for (int e = 0; e < ne; ++e) {
        const ElementSpace& es = space.elements[e];
        Eigen::VectorXd v = Eigen::VectorXd::Zero(es.grid.nodes());
        for (const auto& b : es.basis) v += out.coefficients[b.dof] * b.values;
        out.field.values[e] = std::move(v);
    }
    return out;
}

CoarseSolution baseline_solve(const CoarseMesh& mesh, const PerforationSet& perf, const Source& f, MsMethod method,
                              bool with_bubbles, int fine_n, double kappa, int threads) {
    return msfem_solve(build_baseline_space(mesh, perf, method, with_bubbles, fine_n, kappa, threads), f);
}

ElementFields restrict_reference(const FineSolution& ref, const CoarseMesh& mesh, int fine_n) {
    const int N = mesh.k() * fine_n;
    if (N <= 0 || ref.n % N != 0)
        throw DimensionError("reference resolution " + std::to_string(ref.n) + " is not a multiple of " +
                             std::to_string(N));
    const int s = ref.n / N;
    ElementFields out;
    out.mesh = mesh;
    out.fine_n = fine_n;
    out.values.resize(static_cast<std::size_t>(mesh.element_count()));
    for (int e = 0; e < mesh.element_count(); ++e) {
        const GridBlock g = element_block(mesh, fine_n, e);
        Eigen::VectorXd v(g.nodes());
        for (int b = 0; b <= g.cells; ++b)
            for (int a = 0; a <= g.cells; ++a) v[g.node(a, b)] = ref.at((g.i0 + a) * s, (g.j0 + b) * s);
        out.values[e] = std::move(v);
    }
    return out;
}

ErrorPair compute_errors(const ElementFields& u, const ElementFields& ref, const PerforationSet& perf) {
    if (u.mesh.k() != ref.mesh.k() || u.fine_n != ref.fine_n || u.values.size() != ref.values.size())
        throw DimensionError("fields live on different grids");
    double e0 = 0, r0 = 0, e1 = 0, r1 = 0;
    double n[4], dx[4], dy[4];
    for (int e = 0; e < u.mesh.element_count(); ++e) {
        const GridBlock g = element_block(u.mesh, u.fine_n, e);
        const auto& uv = u.values[e];
        const auto& rv = ref.values[e];
        if (uv.size() != g.nodes() || rv.size() != g.nodes()) throw DimensionError("field size does not match its grid");
        const double h = g.h(), w = h * h / 4.0;
        for (int b = 0; b < g.cells; ++b)
            for (int a = 0; a < g.cells; ++a) {
                double dv[4], rr[4];
                for (int c = 0; c < 4; ++c) {
                    const int id = g.node(a + kCornerA[c], b + kCornerB[c]);
                    rr[c] = rv[id];
                    dv[c] = uv[id] - rv[id];
                }
                for (double gy : kGauss)
                    for (double gx : kGauss) {
                        if (perf.contains(g.x(a) + gx * h, g.y(b) + gy * h)) continue;
                        shape(gx, gy, n, dx, dy);
                        double ev = 0, rvv = 0, egx = 0, egy = 0, rgx = 0, rgy = 0;
                        for (int c = 0; c < 4; ++c) {
                            ev += n[c] * dv[c];
                            rvv += n[c] * rr[c];
                            egx += dx[c] * dv[c];
                            egy += dy[c] * dv[c];
                            rgx += dx[c] * rr[c];
                            rgy += dy[c] * rr[c];
                        }
                        e0 += w * ev * ev;
                        r0 += w * rvv * rvv;
                        e1 += w * (egx * egx + egy * egy) / (h * h);
                        r1 += w * (rgx * rgx + rgy * rgy) / (h * h);
                    }
            }
    }
    auto rel = [](double num, double den) { return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num); };
    return {rel(e0, r0), rel(e1, r1)};
}

ErrorPair compute_errors(const CoarseSolution& u, const FineSolution& ref) {
    return compute_errors(u.field, restrict_reference(ref, u.field.mesh, u.field.fine_n), ref.perf);
}

ErrorPair solution_norms(const FineSolution& u) {
    double l2 = 0.0, h1 = 0.0;
    const GridBlock g{u.n, 0, 0, u.n};
    const double h = g.h(), w = h * h / 4.0;
    double n[4], dx[4], dy[4];
    for (int b = 0; b < g.cells; ++b)
        for (int a = 0; a < g.cells; ++a)
            for (double gy : kGauss)
                for (double gx : kGauss) {
                    if (u.perf.contains(g.x(a) + gx * h, g.y(b) + gy * h)) continue;
                    shape(gx, gy, n, dx, dy);
                    double v = 0, vx = 0, vy = 0;
                    for (int c = 0; c < 4; ++c) {
                        const double z = u.values[g.node(a + kCornerA[c], b + kCornerB[c])];
                        v += n[c] * z;
                        vx += dx[c] * z;
                        vy += dy[c] * z;
                    }
                    l2 += w * v * v;
                    h1 += w * (vx * vx + vy * vy) / (h * h);
                }
    return {std::sqrt(l2), std::sqrt(h1)};
}

double field_value(const ElementFields& u, double x, double y) {
    const int k = u.mesh.k();
    const int N = k * u.fine_n;
    const double gx = std::clamp(x, 0.0, 1.0) * N, gy = std::clamp(y, 0.0, 1.0) * N;
    const int ci = std::min(static_cast<int>(gx), N - 1), cj = std::min(static_cast<int>(gy), N - 1);
    const int e = (cj / u.fine_n) * k + ci / u.fine_n;
    const GridBlock g = element_block(u.mesh, u.fine_n, e);
    const int a = ci - g.i0, b = cj - g.j0;
    const double tx = gx - ci, ty = gy - cj;
    const auto& v = u.values[e];
    return (1 - tx) * (1 - ty) * v[g.node(a, b)] + tx * (1 - ty) * v[g.node(a + 1, b)] +
           tx * ty * v[g.node(a + 1, b + 1)] + (1 - tx) * ty * v[g.node(a, b + 1)];
}

double edge_integral(const GridBlock& g, const Eigen::VectorXd& values, int local_edge) {
    const auto nodes = edge_nodes(g, local_edge);
    double s = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q)
        s += ((q == 0 || q + 1 == nodes.size()) ? 0.5 : 1.0) * values[nodes[q]];
    return s * g.h();
}

double basis_constraint_defect(const MsFEMSpace& space) {
    double worst = 0.0;
    const auto& mesh = space.mesh;
    for (int e = 0; e < mesh.element_count(); ++e) {
        const auto& es = space.elements[e];
        for (const auto& b : es.basis)
            for (int l = 0; l < 4; ++l) {
                const int ge = mesh.element_edge(e % mesh.k(), e / mesh.k(), l);
                if (ge < 0) continue;
                const double target = space.edge_dof[ge] == b.dof ? 1.0 : 0.0;
                worst = std::max(worst, std::abs(edge_integral(es.grid, b.values, l) - target));
            }
    }
    return worst;
}

double mean_jump_defect(const ElementFields& u) {
    const auto& mesh = u.mesh;
    double worst = 0.0, scale = 0.0;
    for (int e = 0; e < mesh.internal_edge_count(); ++e) {
        const auto& ed = mesh.edge(e);
        const int t1 = ed.elements[0], t2 = ed.elements[1];
        const int l1 = ed.vertical ? 1 : 2, l2 = ed.vertical ? 3 : 0;
        const double a = edge_integral(element_block(mesh, u.fine_n, t1), u.values[t1], l1);
        const double b = edge_integral(element_block(mesh, u.fine_n, t2), u.values[t2], l2);
        worst = std::max(worst, std::abs(a - b));
        scale = std::max({scale, std::abs(a), std::abs(b)});
    }
    return scale > 0.0 ? worst / scale : worst;
}

double orthogonality_residual(const MsFEMSpace& space, int samples, std::uint64_t seed) {
    if (space.method != MsMethod::CrouzeixRaviart)
        throw ParameterError("orthogonality is defined for Crouzeix-Raviart spaces");
    const auto& mesh = space.mesh;
    double worst = 0.0;
    for (int e = 0; e < mesh.element_count(); ++e) {
        const auto& es = space.elements[e];
        if (es.basis.empty()) continue;
        const GridBlock& g = es.grid;
        const auto in = block_inside(g, space.perf);
        // Test functions live on free nodes outside the perforations.
        std::vector<int> support;
        for (int b = 0; b <= g.cells; ++b)
            for (int a = 0; a <= g.cells; ++a)
                if (!g.on_domain_boundary(a, b) && !in[g.node(a, b)]) support.push_back(g.node(a, b));
        std::vector<Eigen::VectorXd> rows;
        for (int l = 0; l < 4; ++l) {
            if (mesh.element_edge(e % mesh.k(), e / mesh.k(), l) < 0) continue;
            Eigen::VectorXd r = Eigen::VectorXd::Zero(g.nodes());
            const auto nodes = edge_nodes(g, l);
            for (std::size_t q = 0; q < nodes.size(); ++q)
                r[nodes[q]] = ((q == 0 || q + 1 == nodes.size()) ? 0.5 : 1.0) * g.h();
            rows.push_back(std::move(r));
        }
        if (space.with_bubbles) rows.push_back(block_load(g, [](double, double) { return 1.0; }));
        Eigen::MatrixXd C(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(support.size()));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t q = 0; q < support.size(); ++q) C(r, q) = rows[r][support[q]];
        const Eigen::MatrixXd gram = C * C.transpose();
        const auto gram_ldlt = gram.ldlt();

        std::mt19937_64 engine(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(e + 1)));
        std::normal_distribution<double> normal;
        for (int sample = 0; sample < samples; ++sample) {
            Eigen::VectorXd z(static_cast<Eigen::Index>(support.size()));
            for (auto& v : z) v = normal(engine);
            z -= C.transpose() * gram_ldlt.solve(C * z);
            Eigen::VectorXd w = Eigen::VectorXd::Zero(g.nodes());
            for (std::size_t q = 0; q < support.size(); ++q) w[support[q]] = z[q];
            const Eigen::VectorXd Kw = es.stiffness * w;
            const double ww = w.dot(Kw);
            for (const auto& b : es.basis) {
                const double uu = b.values.dot(es.stiffness * b.values);
                if (uu <= 0.0 || ww <= 0.0) continue;
                worst = std::max(worst, std::abs(b.values.dot(Kw)) / std::sqrt(uu * ww));
            }
        }
    }
    return worst;
}

double max_inside_ratio(const ElementFields& u, const PerforationSet& perf) {
    double inside = 0.0, all = 0.0;
    for (int e = 0; e < u.mesh.element_count(); ++e) {
        const GridBlock g = element_block(u.mesh, u.fine_n, e);
        const auto in = block_inside(g, perf);
        for (int i = 0; i < g.nodes(); ++i) {
            const double v = std::abs(u.values[e][i]);
            all = std::max(all, v);
            if (in[i]) inside = std::max(inside, v);
        }
    }
    return all > 0.0 ? inside / all : 0.0;
}

double max_inside_ratio(const FineSolution& u) {
    const GridBlock g{u.n, 0, 0, u.n};
    const auto in = block_inside(g, u.perf);
    double inside = 0.0, all = 0.0;
    for (int i = 0; i < g.nodes(); ++i) {
        const double v = std::abs(u.values[i]);
        all = std::max(all, v);
        if (in[i]) inside = std::max(inside, v);
    }
    return all > 0.0 ? inside / all : 0.0;
}

void write_msfem_csv(std::ostream& os, const std::vector<MsFEMRow>& rows, bool header) {
    if (header) os << "method,H,geometry,with_bubbles,l2_rel,h1_rel,dof,solves\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line << std::setprecision(10) << r.method << ',' << r.H << ",\"" << r.geometry << "\","
             << (r.with_bubbles ? 1 : 0) << ',' << r.errors.l2_rel << ',' << r.errors.h1_rel << ',' << r.dofs
             << ',' << r.solves << '\n';
        os << line.str();
    }
}

}  // namespace homlab
