#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace homlab {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class EllipticityError : public Error {
public:
    using Error::Error;
};

/// Requested exactness constraint has no admissible configuration.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class ComparabilityError : public Error {
public:
    using Error::Error;
};

/// Iterative or direct solver failure. Carries the iteration count and the
/// last relative residual when they are meaningful.
class SolverError : public Error {
public:
    SolverError(const std::string& what, std::size_t iterations = 0, double residual = 0.0)
        : Error(what), iterations_(iterations), residual_(residual) {}

    std::size_t iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

/// Singular local saddle system; the message names the element or edge.
class LocalSolveError : public SolverError {
public:
    using SolverError::SolverError;
};

class AssemblyError : public SolverError {
public:
    using SolverError::SolverError;
};

inline bool is_spd(const Mat2& m, double min_eig = 0.0) {
    if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * (1.0 + m.norm())) return false;
    Eigen::SelfAdjointEigenSolver<Mat2> es(m);
    return es.eigenvalues().minCoeff() > min_eig;
}

inline double min_eigenvalue(const Mat2& m) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Mat2& m) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().maxCoeff();
}

}  // namespace homlab
