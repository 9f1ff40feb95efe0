// Sample covariance, symmetric eigendecomposition and rotation-equivariant
// reconstruction.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nlshrink {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when the shape of an input violates a precondition (p >= n, length mismatch, ...).
class dimension_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative numerical routine fails to produce a trustworthy answer.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n x p matrix of observations, one row per observation.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.cols() < 1 || values_.rows() < 1)
      throw dimension_error("data matrix is empty");
    if (!values_.allFinite())
      throw std::invalid_argument("data matrix contains non-finite entries");
  }

  const Matrix& values() const { return values_; }
  Eigen::Index n() const { return values_.rows(); }
  Eigen::Index p() const { return values_.cols(); }
  double concentration() const { return static_cast<double>(p()) / static_cast<double>(n()); }

  /// Enforces c = p/n < 1. Estimators additionally need p >= 2.
  void require_concentration_below_one(Eigen::Index min_p = 1) const {
    if (p() < min_p || n() < 2)
      throw dimension_error("need at least " + std::to_string(min_p) +
                            " variables and 2 observations");
    if (p() >= n())
      throw dimension_error("p = " + std::to_string(p()) + " >= n = " + std::to_string(n()) +
                            ": the concentration c = p/n must be < 1");
  }

 private:
  Matrix values_;
};

struct EigenSystem {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // column i pairs with eigenvalues[i]

  Eigen::Index size() const { return eigenvalues.size(); }
};

/// S = Y'Y / n. No centering unless `demean` is set, in which case the
/// column means are removed first and the divisor stays n.
inline Matrix sample_covariance(const DataMatrix& data, bool demean = false) {
  data.require_concentration_below_one();
  const double n = static_cast<double>(data.n());
  Matrix s(data.p(), data.p());
  if (demean) {
    Matrix centered = data.values().rowwise() - data.values().colwise().mean();
    s.noalias() = centered.transpose() * centered;
  } else {
    s.setZero();
    s.selfadjointView<Eigen::Lower>().rankUpdate(data.values().transpose());
    s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  }
  s /= n;
  return s;
}

inline void require_symmetric(const Matrix& s, double tol = 1e-9) {
  if (s.rows() != s.cols()) throw dimension_error("matrix is not square");
  if (!s.allFinite()) throw std::invalid_argument("matrix contains non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("matrix is not symmetric");
}

/// Symmetric eigendecomposition with ascending eigenvalues.
inline EigenSystem eigh(const Matrix& s) {
  require_symmetric(s);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw numerical_error("symmetric eigendecomposition did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// U diag(d) U'.
inline Matrix reconstruct(const EigenSystem& eig, const Vector& d) {
  if (d.size() != eig.size())
    throw dimension_error("reconstruct: got " + std::to_string(d.size()) + " factors for " +
                          std::to_string(eig.size()) + " eigenvectors");
  if (!d.allFinite()) throw std::invalid_argument("reconstruct: non-finite factor");
  Matrix out = eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

/// Symmetric square root of a positive semidefinite matrix.
inline Matrix symmetric_sqrt(const Matrix& s) {
  EigenSystem e = eigh(s);
  if (e.eigenvalues.minCoeff() < -1e-12 * std::max(1.0, e.eigenvalues.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("symmetric_sqrt: matrix is not positive semidefinite");
  return reconstruct(e, e.eigenvalues.cwiseMax(0.0).cwiseSqrt());
}

/// Inverse of a symmetric positive definite matrix through its eigensystem.
inline Matrix spd_inverse(const Matrix& s) {
  EigenSystem e = eigh(s);
  if (e.eigenvalues.minCoeff() <= 0.0)
    throw std::invalid_argument("spd_inverse: matrix is not positive definite");
  return reconstruct(e, e.eigenvalues.cwiseInverse());
}

}  // namespace nlshrink
