// Rotation-equivariant covariance and precision estimators built on the
// sample eigenvectors: nonlinear shrinkage (bona fide and oracle), linear
// shrinkage toward a multiple of the identity, a leave-one-out variant and
// the finite-sample optimal reference.
#pragma once

#include <string>
#include <vector>

#include "h_estimator.hpp"
#include "linalg.hpp"

namespace nlshrink {

enum class FactorKind { covariance, precision };

struct ShrinkageFactors {
  Vector values;
  FactorKind kind = FactorKind::covariance;
  std::string method;
  std::vector<std::string> warnings;
};

/// Linear interpolation of grid values onto sorted points, real and
/// imaginary parts separately; constant beyond the grid ends.
inline ComplexVector interpolate_m(const Vector& grid, const ComplexVector& m, const Vector& at) {
  if (grid.size() != m.size() || grid.size() < 1)
    throw dimension_error("interpolate_m: grid and values differ in length");
  const Eigen::Index g = grid.size();
  ComplexVector out(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double x = at[i];
    if (x <= grid[0]) {
      out[i] = m[0];
    } else if (x >= grid[g - 1]) {
      out[i] = m[g - 1];
    } else {
      const Eigen::Index hi = std::upper_bound(grid.data(), grid.data() + g, x) - grid.data();
      const Eigen::Index lo = hi - 1;
      const double s = (x - grid[lo]) / (grid[hi] - grid[lo]);
      out[i] = m[lo] + s * (m[hi] - m[lo]);
    }
  }
  return out;
}

/// d_i = lambda_i / |1 - c - c lambda_i m_i|^2, with m_i the boundary value
/// of the Stieltjes transform at lambda_i.
inline ShrinkageFactors oracle_cov_factors(const Vector& lambda, double c, const ComplexVector& m,
                                           std::string method = "nonlinear") {
  if (lambda.size() != m.size()) throw dimension_error("oracle_cov_factors: length mismatch");
  if (!(c > 0.0) || !(c < 1.0)) throw std::invalid_argument("oracle_cov_factors: c must lie in (0, 1)");
  ShrinkageFactors f{Vector(lambda.size()), FactorKind::covariance, std::move(method), {}};
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (!std::isfinite(std::abs(m[i]))) throw std::invalid_argument("oracle_cov_factors: non-finite m");
    const double den = std::norm(1.0 - c - c * lambda[i] * m[i]);
    if (!(den > 0.0))
      throw numerical_error("oracle_cov_factors: zero correction at index " + std::to_string(i));
    f.values[i] = lambda[i] / den;
  }
  return f;
}

/// a_i = (1 - c - 2 c lambda_i Re m_i) / lambda_i. Nonpositive values are
/// kept and reported.
inline ShrinkageFactors oracle_prec_factors(const Vector& lambda, double c, const ComplexVector& m,
                                            std::string method = "nonlinear") {
  if (lambda.size() != m.size()) throw dimension_error("oracle_prec_factors: length mismatch");
  if (!(c > 0.0) || !(c < 1.0)) throw std::invalid_argument("oracle_prec_factors: c must lie in (0, 1)");
  ShrinkageFactors f{Vector(lambda.size()), FactorKind::precision, std::move(method), {}};
  int nonpositive = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (!(lambda[i] > 0.0)) throw std::invalid_argument("oracle_prec_factors: eigenvalues must be positive");
    f.values[i] = (1.0 - c - 2.0 * c * lambda[i] * m[i].real()) / lambda[i];
    if (!(f.values[i] > 0.0)) ++nonpositive;
  }
  if (nonpositive > 0)
    f.warnings.push_back(std::to_string(nonpositive) + " precision factor(s) are not positive");
  return f;
}

/// Boundary values m(lambda_i) for the true population spectrum.
inline ComplexVector population_m(const SpectralMixture& h, const Concentration& conc,
                                  const Vector& lambda) {
  return solve_grid(h, conc, lambda).m;
}

struct EstimateOptions {
  FitOptions fit;
  bool demean = false;
};

struct SpectralEstimate {
  EigenSystem eig;
  Concentration conc{0.5};
  FitResult fit;
  ComplexVector m_at_eigenvalues;
};

/// Sample eigensystem, fitted spectrum and interpolated m at each sample
/// eigenvalue: the common part of the covariance and precision estimators.
inline SpectralEstimate estimate_spectrum(const DataMatrix& data, const EstimateOptions& opt = {}) {
  data.require_concentration_below_one(2);
  SpectralEstimate est;
  est.eig = eigh(sample_covariance(data, opt.demean));
  est.conc = Concentration(static_cast<std::size_t>(data.p()), static_cast<std::size_t>(data.n()));
  if (!(est.eig.eigenvalues[0] > 0.0))
    throw numerical_error("sample covariance matrix is singular");
  est.fit = fit_spectrum(est.eig.eigenvalues, est.conc, opt.fit);
  est.m_at_eigenvalues =
      interpolate_m(est.fit.solution.grid, est.fit.solution.m, est.eig.eigenvalues);
  return est;
}

struct MatrixEstimate {
  Matrix matrix;
  ShrinkageFactors factors;
  FitDiagnostics diagnostics;
  double objective = 0.0;
};

inline MatrixEstimate shrink_covariance(const SpectralEstimate& est) {
  MatrixEstimate out;
  out.factors = oracle_cov_factors(est.eig.eigenvalues, est.conc.c, est.m_at_eigenvalues);
  out.matrix = reconstruct(est.eig, out.factors.values);
  out.diagnostics = est.fit.diagnostics;
  out.objective = est.fit.objective;
  return out;
}

inline MatrixEstimate shrink_precision(const SpectralEstimate& est) {
  MatrixEstimate out;
  out.factors = oracle_prec_factors(est.eig.eigenvalues, est.conc.c, est.m_at_eigenvalues);
  out.matrix = reconstruct(est.eig, out.factors.values);
  out.diagnostics = est.fit.diagnostics;
  out.objective = est.fit.objective;
  return out;
}

inline MatrixEstimate estimate_cov(const DataMatrix& data, const EstimateOptions& opt = {}) {
  return shrink_covariance(estimate_spectrum(data, opt));
}

inline MatrixEstimate estimate_precision(const DataMatrix& data, const EstimateOptions& opt = {}) {
  return shrink_precision(estimate_spectrum(data, opt));
}

struct LinearShrinkage {
  Matrix matrix;
  double target_scale = 0.0;  // m in m I
  double intensity = 0.0;     // weight on the target, in [0, 1]
  ShrinkageFactors factors;   // eigenvalue map, ascending sample order
};

/// Convex combination of S and m I with the asymptotically optimal
/// intensity b^2 / d^2, in the norm ||A||^2 = tr(A A') / p:
///   m = tr(S)/p, d^2 = ||S - m I||^2,
///   b^2 = min(d^2, n^{-2} sum_k ||y_k y_k' - S||^2).
inline LinearShrinkage linear_shrinkage(const DataMatrix& data, bool demean = false) {
  data.require_concentration_below_one(2);
  const Matrix s = sample_covariance(data, demean);
  const Eigen::Index p = data.p();
  const double pd = static_cast<double>(p);
  const double nd = static_cast<double>(data.n());
  Matrix y = data.values();
  if (demean) y = y.rowwise() - y.colwise().mean();
  const double mu = s.trace() / pd;
  const double s_norm2 = s.squaredNorm();
  const double d2 = (s_norm2 - 2.0 * mu * s.trace() + mu * mu * pd) / pd;
  // ||y y' - S||_F^2 = |y|^4 - 2 y'Sy + ||S||_F^2
  const Matrix ys = y * s;
  double bbar2 = 0.0;
  for (Eigen::Index k = 0; k < data.n(); ++k) {
    const double yy = y.row(k).squaredNorm();
    bbar2 += yy * yy - 2.0 * ys.row(k).dot(y.row(k)) + s_norm2;
  }
  bbar2 /= nd * nd * pd;
  const double b2 = std::min(bbar2, d2);
  const double rho = d2 > 0.0 ? b2 / d2 : 1.0;
  LinearShrinkage out;
  out.target_scale = mu;
  out.intensity = rho;
  out.matrix = rho * mu * Matrix::Identity(p, p) + (1.0 - rho) * s;
  const Vector lam = eigh(s).eigenvalues;
  out.factors = {rho * mu + (1.0 - rho) * lam.array(), FactorKind::covariance, "linear", {}};
  return out;
}

/// d_i = n^{-1} sum_k (u_i[k]' y_k)^2 where u_i[k] is the i-th eigenvector
/// (ascending order) of the sample covariance without observation k.
inline ShrinkageFactors cross_validation_factors(const DataMatrix& data) {
  const Eigen::Index n = data.n(), p = data.p();
  if (p < 2 || p > n - 1)
    throw dimension_error("cross_validation_factors: need 2 <= p <= n - 1");
  const Matrix s = sample_covariance(data);
  const double nd = static_cast<double>(n);
  Vector d = Vector::Zero(p);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Vector y = data.values().row(k).transpose();
    Matrix sk = (nd * s - y * y.transpose()) / (nd - 1.0);
    sk = 0.5 * (sk + sk.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sk, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
      throw numerical_error("cross_validation_factors: eigendecomposition failed for fold " +
                            std::to_string(k));
    d += (solver.eigenvectors().transpose() * y).array().square().matrix();
  }
  return {d / nd, FactorKind::covariance, "cv", {}};
}

struct FiniteSampleOptimal {
  Vector d;  // u_i' Sigma u_i
  Vector a;  // u_i' Sigma^{-1} u_i
  Matrix s_star;
  Matrix p_star;
};

inline FiniteSampleOptimal finite_sample_optimal(const EigenSystem& eig, const Matrix& sigma) {
  require_symmetric(sigma);
  if (sigma.rows() != eig.size()) throw dimension_error("finite_sample_optimal: dimension mismatch");
  const Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("finite_sample_optimal: Sigma is not positive definite");
  const Matrix& u = eig.eigenvectors;
  FiniteSampleOptimal out;
  out.d = (u.transpose() * sigma * u).diagonal();
  const Matrix sigma_inv_u = llt.solve(u);
  out.a = (u.transpose() * sigma_inv_u).diagonal();
  out.s_star = reconstruct(eig, out.d);
  out.p_star = reconstruct(eig, out.a);
  return out;
}

}  // namespace nlshrink
