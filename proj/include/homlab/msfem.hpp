#pragma once

#include "homlab/perforations.hpp"
#include "homlab/types.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace homlab {

using SpMat = Eigen::SparseMatrix<double>;

/// Block of a uniform grid of D with N cells per side: cells [i0, i0 + cells)
/// by [j0, j0 + cells). Nodes are numbered b * (cells + 1) + a.
struct GridBlock {
    int N = 1;
    int i0 = 0;
    int j0 = 0;
    int cells = 1;

    int side() const { return cells + 1; }
    int nodes() const { return side() * side(); }
    int node(int a, int b) const { return b * side() + a; }
    double h() const { return 1.0 / N; }
    double x(int a) const { return static_cast<double>(i0 + a) / N; }
    double y(int b) const { return static_cast<double>(j0 + b) / N; }
    bool on_domain_boundary(int a, int b) const {
        const int gi = i0 + a, gj = j0 + b;
        return gi == 0 || gi == N || gj == 0 || gj == N;
    }
};

/// Q1 stiffness of -Laplace on the block plus the lumped penalty kappa h^2/4
/// per (element, node) pair with the node inside the perforations.
SpMat block_stiffness(const GridBlock& g, const PerforationSet& perf, double kappa);
/// Load vector of f with 2x2 Gauss quadrature per fine cell.
Eigen::VectorXd block_load(const GridBlock& g, const Source& f);
/// Nodal membership in the perforations.
std::vector<char> block_inside(const GridBlock& g, const PerforationSet& perf);

/// Default penalty 1e8 / h^2.
double default_kappa(double h);

struct FineSolution {
    int n = 0;
    double kappa = 0.0;
    PerforationSet perf;
    /// Nodal values on the (n+1)^2 grid of D, boundary included.
    Eigen::VectorXd values;
    std::vector<std::string> warnings;

    double at(int a, int b) const { return values[b * (n + 1) + a]; }
};

/// Penalized Q1 reference solve of -Laplace u = f in D with u = 0 on the
/// boundary. kappa <= 0 selects the default penalty. Under-resolved
/// perforations produce warnings, or a GeometryError when strict.
FineSolution reference_solve(const PerforationSet& perf, const Source& f, int fine_n, double kappa = 0.0,
                             bool strict = false);

/// Uniform k x k quadrilateral mesh of D. Internal vertical edges come first
/// (x = i H, i = 1..k-1), then internal horizontal edges.
class CoarseMesh {
public:
    explicit CoarseMesh(int k = 1);
    /// Throws ParameterError unless 1/H is a positive integer.
    static CoarseMesh uniform(double H);

    int k() const { return k_; }
    double H() const { return 1.0 / k_; }
    int element_count() const { return k_ * k_; }
    int element(int i, int j) const { return j * k_ + i; }
    int internal_edge_count() const { return 2 * k_ * (k_ - 1); }
    /// Local edges: 0 bottom, 1 right, 2 top, 3 left. Returns -1 on the boundary of D.
    int element_edge(int i, int j, int local) const;
    /// Interior vertices (i, j) with 1 <= i, j <= k-1, or -1 on the boundary.
    int interior_vertex(int i, int j) const;
    int interior_vertex_count() const { return (k_ - 1) * (k_ - 1); }

    struct Edge {
        bool vertical = true;
        /// Lattice coordinates of the lower/left endpoint.
        int i = 0;
        int j = 0;
        /// Adjacent elements (left/bottom first).
        int elements[2] = {-1, -1};
    };
    const Edge& edge(int e) const { return edges_[e]; }

private:
    int k_;
    std::vector<Edge> edges_;
};

enum class MsMethod { CrouzeixRaviart, MsFEMLinear, CoarseQ1 };

std::string to_string(MsMethod m);
MsMethod parse_method(const std::string& name);

struct LocalFunction {
    int dof = -1;
    Eigen::VectorXd values;
};

struct ElementSpace {
    GridBlock grid;
    SpMat stiffness;
    std::vector<LocalFunction> basis;
    bool inside_perforation = false;
};

struct MsFEMSpace {
    MsMethod method = MsMethod::CrouzeixRaviart;
    CoarseMesh mesh;
    PerforationSet perf;
    double kappa = 0.0;
    int fine_n = 0;
    bool with_bubbles = true;
    std::vector<ElementSpace> elements;
    /// Per internal edge: coarse dof, or -1 when the edge lies inside the perforations.
    std::vector<int> edge_dof;
    /// Per element: bubble dof, or -1.
    std::vector<int> bubble_dof;
    /// Per interior vertex (vertex-based methods): coarse dof.
    std::vector<int> vertex_dof;
    int dof_count = 0;
    std::size_t local_solves = 0;
    std::vector<std::string> warnings;
};

/// Smallest fine_n with H / h >= 32 and at least 4 cells across the narrowest perforation.
int default_fine_n(const CoarseMesh& mesh, const PerforationSet& perf);

/// Crouzeix-Raviart MsFEM space: one function per internal edge with unit
/// integral on that edge and zero integral on the other internal edges of its
/// support, plus optional bubbles. Each function restricted to an element is
/// a penalized local solve with one multiplier per internal edge.
MsFEMSpace build_cr_space(const CoarseMesh& mesh, const PerforationSet& perf, int fine_n, double kappa,
                          bool with_bubbles, int threads = 1);

/// Vertex-based spaces: MsFEMLinear (local solves with bilinear Dirichlet data
/// on element boundaries) or CoarseQ1 (bilinear interpolants). Bubbles vanish
/// on element boundaries.
MsFEMSpace build_baseline_space(const CoarseMesh& mesh, const PerforationSet& perf, MsMethod method,
                                bool with_bubbles, int fine_n, double kappa, int threads = 1);

/// Fine nodal values of a field on every coarse element's grid block.
struct ElementFields {
    CoarseMesh mesh;
    int fine_n = 0;
    std::vector<Eigen::VectorXd> values;
};

struct CoarseSolution {
    MsMethod method = MsMethod::CrouzeixRaviart;
    bool with_bubbles = true;
    Eigen::VectorXd coefficients;
    ElementFields field;
    int dofs = 0;
    std::size_t solves = 0;
    /// ||A c - F|| / ||F|| of the coarse system (0 when F = 0).
    double galerkin_residual = 0.0;
};

/// Coarse stiffness a_H over the space's basis, assembled element by element.
SpMat coarse_matrix(const MsFEMSpace& space);

/// Throws AssemblyError when no basis function survives or the coarse matrix is singular.
CoarseSolution msfem_solve(const MsFEMSpace& space, const Source& f);

CoarseSolution baseline_solve(const CoarseMesh& mesh, const PerforationSet& perf, const Source& f, MsMethod method,
                              bool with_bubbles, int fine_n, double kappa, int threads = 1);

/// Samples the reference at the element grids. Throws DimensionError unless
/// ref.n is a multiple of k * fine_n.
ElementFields restrict_reference(const FineSolution& ref, const CoarseMesh& mesh, int fine_n);

struct ErrorPair {
    double l2_rel = 0.0;
    double h1_rel = 0.0;
};

/// Relative L2 and broken-H1 errors over the unperforated part, using 2x2 Gauss
/// points masked by the perforation indicator.
ErrorPair compute_errors(const ElementFields& u, const ElementFields& ref, const PerforationSet& perf);
ErrorPair compute_errors(const CoarseSolution& u, const FineSolution& ref);
/// Absolute L2 norm and H1 seminorm over the unperforated part.
ErrorPair solution_norms(const FineSolution& u);

/// Bilinear evaluation of an element field at (x, y) in the closed unit square.
double field_value(const ElementFields& u, double x, double y);

/// Trapezoid integral of element nodal values along a local edge.
double edge_integral(const GridBlock& g, const Eigen::VectorXd& values, int local_edge);

/// Max |int_e u - delta| over elements, basis functions and internal edges,
/// with delta = 1 on the function's own edge and 0 elsewhere (CR spaces).
double basis_constraint_defect(const MsFEMSpace& space);
/// Max over internal edges of |int_E u|_T1 - int_E u|_T2|, relative to the largest |int_E u|.
double mean_jump_defect(const ElementFields& u);
/// Max relative a_H inner product between basis functions and random fine
/// functions with zero internal-edge integrals and zero element integral.
double orthogonality_residual(const MsFEMSpace& space, int samples, std::uint64_t seed);
/// Max |value| at nodes inside the perforations relative to max |value|.
double max_inside_ratio(const ElementFields& u, const PerforationSet& perf);
double max_inside_ratio(const FineSolution& u);

struct MsFEMRow {
    std::string method;
    double H = 0.0;
    std::string geometry;
    bool with_bubbles = true;
    ErrorPair errors;
    int dofs = 0;
    std::size_t solves = 0;
};

/// Columns: method,H,geometry,with_bubbles,l2_rel,h1_rel,dof,solves.
void write_msfem_csv(std::ostream& os, const std::vector<MsFEMRow>& rows, bool header = true);

}  // namespace homlab
