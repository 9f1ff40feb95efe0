// Forward Marcenko-Pastur solver: support of the limiting sample spectrum,
// boundary values of its Stieltjes transform on a real grid, density and
// trapezoidal c.d.f.
//
// Notation used throughout:
//   phi(v)   = v - c v m_LH(v)             (the inverse map z~ when v is real)
//   v_lambda = the root of phi(v) = lambda in C+ (interior of the support),
//              or the real root on an increasing branch of z~ (off support)
//   m(lambda) = (1 - c)/(c lambda) - 1/(c v_lambda)
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "basis.hpp"

namespace nlshrink {

using ComplexVector = Eigen::VectorXcd;

/// Ratio c = p / n of dimension to sample size, restricted to (0, 1).
struct Concentration {
  double c = 0.5;
  std::size_t p = 0;
  std::size_t n = 0;

  explicit Concentration(double ratio) : c(ratio) { validate(); }
  Concentration(std::size_t dim, std::size_t samples)
      : c(static_cast<double>(dim) / static_cast<double>(samples)), p(dim), n(samples) {
    validate();
  }

 private:
  void validate() const {
    if (!(c > 0.0) || !(c < 1.0))
      throw std::invalid_argument("concentration c = " + std::to_string(c) +
                                  " must lie in (0, 1)");
  }
};

struct SupportSet {
  std::vector<Interval> intervals;    // support of F, ascending and disjoint
  std::vector<Interval> u_intervals;  // matching (u1, u2) where y_u > 0

  bool contains(double x) const {
    for (const Interval& iv : intervals)
      if (iv.contains(x)) return true;
    return false;
  }
  /// Index of the interval whose interior holds x, if any.
  std::optional<std::size_t> interior_index(double x) const {
    for (std::size_t i = 0; i < intervals.size(); ++i)
      if (x > intervals[i].lo && x < intervals[i].hi) return i;
    return std::nullopt;
  }
};

/// Maximal real interval of u on which z~ is increasing, with its image.
struct Branch {
  double u_lo = 0.0;
  double u_hi = 0.0;
  double z_lo = 0.0;
  double z_hi = 0.0;  // +inf for the last branch
};

struct SupportScan {
  SupportSet support;
  std::vector<Branch> branches;
};

struct MpGridSolution {
  Vector grid;
  ComplexVector m;  // boundary Stieltjes values a_j + i b_j
  ComplexVector v;  // matching v_lambda
  double c = 0.5;

  Vector density() const { return m.imag() / M_PI; }
};

namespace detail {

inline double real_tol(double scale) { return 1e-14 * std::max(1.0, std::abs(scale)); }

/// phi(v) = v - c v m_LH(v) and its derivative.
inline TransformValue phi(const SpectralMixture& mix, double c, complex v) {
  const TransformValue l = mix.mlh(v);
  return {v - c * v * l.value, 1.0 - c * (l.value + v * l.derivative)};
}

/// z~'(u) for real u off the support of H.
inline double zt_slope(const SpectralMixture& mix, double c, double u) {
  return phi(mix, c, complex(u, 0.0)).derivative.real();
}

inline double zt_value(const SpectralMixture& mix, double c, double u) {
  return phi(mix, c, complex(u, 0.0)).value.real();
}

template <class F>
double bracket_root(F f, double lo, double hi, double flo, double fhi) {
  std::uintmax_t iters = 200;
  auto tol = [](double a, double b) { return std::abs(a - b) <= 4e-16 * std::max(1.0, std::abs(a)); };
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

/// Largest value of a concave function on (lo, hi) by golden section; stops
/// early as soon as a positive value is seen.
template <class F>
std::pair<double, double> concave_probe(F f, double lo, double hi) {
  const double g = 0.5 * (3.0 - std::sqrt(5.0));
  double a = lo, b = hi;
  double x1 = a + g * (b - a), x2 = b - g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 > 0.0) return {x1, f1};
    if (f2 > 0.0) return {x2, f2};
    if (b - a <= 1e-13 * std::max(1.0, std::abs(b))) break;
    if (f1 < f2) {
      a = x1; x1 = x2; f1 = f2;
      x2 = b - g * (b - a); f2 = f(x2);
    } else {
      b = x2; x2 = x1; f2 = f1;
      x1 = a + g * (b - a); f1 = f(x1);
    }
  }
  return f1 > f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

}  // namespace detail

/// Locates the increasing branches of z~(u) = u - c u m_LH(u) on the
/// positive part of B = {u != 0, u outside supp H}; the support of F is what
/// their images leave uncovered.
///
/// On each component of B, z~'(u) = 1 - c \int t^2/(t - u)^2 dH(t) is
/// concave, so the increasing part is one interval found by a golden-section
/// probe for a positive slope followed by two bracketed roots.
inline SupportScan scan_support(const SpectralMixture& mix, const Concentration& conc) {
  const double c = conc.c;
  const std::vector<Interval> pieces = mix.support();
  if (pieces.empty() || !(pieces.front().lo > 0.0))
    throw std::invalid_argument("scan_support: population spectrum must be supported on (0, inf)");
  auto slope = [&](double u) { return detail::zt_slope(mix, c, u); };
  auto value = [&](double u) { return detail::zt_value(mix, c, u); };

  std::vector<Branch> branches;
  // (0, first piece): slope decreases from 1 - c > 0.
  {
    const double hi = pieces.front().lo;
    const double edge = hi * (1.0 - 1e-13);
    const double s_edge = slope(edge);
    double u_hi = edge;
    if (s_edge < 0.0) u_hi = detail::bracket_root(slope, 0.0, edge, 1.0 - c, s_edge);
    branches.push_back({0.0, u_hi, 0.0, value(u_hi)});
  }
  // Components between pieces.
  for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
    const double lo = pieces[i].hi;
    const double hi = pieces[i + 1].lo;
    const double margin = 1e-13 * std::max(1.0, hi);
    if (hi - lo <= 4.0 * margin) continue;
    const double a = lo + margin, b = hi - margin;
    const double sa = slope(a), sb = slope(b);
    double peak = 0.0;
    if (sa > 0.0) {
      peak = a;
    } else if (sb > 0.0) {
      peak = b;
    } else {
      auto [x, fx] = detail::concave_probe(slope, a, b);
      if (!(fx > 0.0)) continue;
      peak = x;
    }
    const double u_lo = sa > 0.0 ? a : detail::bracket_root(slope, a, peak, sa, slope(peak));
    const double u_hi = sb > 0.0 ? b : detail::bracket_root(slope, peak, b, slope(peak), sb);
    branches.push_back({u_lo, u_hi, value(u_lo), value(u_hi)});
  }
  // (last piece, inf): slope increases towards 1.
  {
    const double lo = pieces.back().hi;
    const double edge = lo * (1.0 + 1e-13);
    const double s_edge = slope(edge);
    double u_lo = edge;
    if (s_edge < 0.0) {
      double far = 2.0 * lo + 1.0;
      double s_far = slope(far);
      while (s_far <= 0.0) {
        far *= 2.0;
        s_far = slope(far);
      }
      u_lo = detail::bracket_root(slope, edge, far, s_edge, s_far);
    }
    branches.push_back({u_lo, std::numeric_limits<double>::infinity(), value(u_lo),
                        std::numeric_limits<double>::infinity()});
  }

  SupportScan scan;
  scan.branches = branches;
  for (std::size_t k = 0; k + 1 < branches.size(); ++k) {
    const double lo = branches[k].z_hi;
    const double hi = branches[k + 1].z_lo;
    if (hi > lo) {
      scan.support.intervals.push_back({lo, hi});
      scan.support.u_intervals.push_back({branches[k].u_hi, branches[k + 1].u_lo});
    }
  }
  return scan;
}

inline SupportSet support(const SpectralMixture& mix, const Concentration& c) {
  return scan_support(mix, c).support;
}

/// y > 0 with Im[phi(u + i y)] = 0, searched in box = [eps, 1/eps]. The
/// imaginary part is negative below the root and positive above it.
inline double solve_y(const SpectralMixture& mix, const Concentration& conc, double u,
                      Interval box = {1e-6, 1e6}) {
  auto g = [&](double y) { return detail::phi(mix, conc.c, complex(u, y)).value.imag(); };
  const double glo = g(box.lo);
  const double ghi = g(box.hi);
  if (!(glo < 0.0) || !(ghi > 0.0)) {
    std::ostringstream msg;
    msg << "solve_y: no sign change in [" << box.lo << ", " << box.hi << "] at u = " << u
        << " (outside spectral bulk)";
    throw numerical_error(msg.str());
  }
  return detail::bracket_root(g, box.lo, box.hi, glo, ghi);
}

/// m(lambda) from v_lambda.
inline complex m_breve_from_v(complex v, double c, double lambda) {
  if (lambda == 0.0) throw std::invalid_argument("m_breve_from_v: lambda must be nonzero");
  return (1.0 - c) / (c * lambda) - 1.0 / (c * v);
}

/// Fixed-point residual of the Marcenko-Pastur equation written in m:
///   R(m) = m - \int dH(t) / (t (1 - c - c x m) - x),
/// together with dR/dm.
inline TransformValue mp_residual(const SpectralMixture& mix, double c, double x, complex m) {
  const complex s = 1.0 - c - c * x * m;
  const complex zeta = x / s;
  const TransformValue h = mix.stieltjes(zeta);
  const complex value = m - h.value / s;
  const complex deriv = 1.0 - c * x * (x * h.derivative / (s * s * s) + h.value / (s * s));
  return {value, deriv};
}

/// Newton iteration for phi(v) = lambda from v0. Returns a root that is
/// either in C+ or real on an increasing branch of z~ off supp H; anything
/// else is rejected.
inline std::optional<complex> newton_v(const SpectralMixture& mix, double c, double lambda,
                                       complex v0, int max_iter = 60) {
  complex v = v0;
  try {
    TransformValue f = detail::phi(mix, c, v);
    complex r = f.value - lambda;
    bool done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
      if (f.derivative == 0.0) return std::nullopt;
      const complex step = r / f.derivative;
      double t = 1.0;
      complex v_new;
      TransformValue f_new;
      complex r_new;
      int halvings = 0;
      for (;;) {
        v_new = v - t * step;
        f_new = detail::phi(mix, c, v_new);
        r_new = f_new.value - lambda;
        if (std::abs(r_new) < std::abs(r)) break;
        if (++halvings > 30) break;
        t *= 0.5;
      }
      if (halvings > 30) break;  // no descent left: converged to rounding or stuck
      const double change = std::abs(v_new - v);
      v = v_new;
      f = f_new;
      r = r_new;
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return std::nullopt;
      if (change <= 1e-15 * std::max(1.0, std::abs(v)) ||
          std::abs(r) <= 1e-14 * std::max(1.0, std::abs(lambda)))
        done = true;
    }
    if (std::abs(r) > 1e-11 * std::max(1.0, std::abs(lambda))) return std::nullopt;
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
  if (v.imag() < 0.0) v = std::conj(v);  // phi(conj v) = conj phi(v) for real lambda
  if (v.imag() <= 1e-12 * std::abs(v)) {
    const double u = v.real();
    if (!(u > 0.0) || mix.on_support(u)) return std::nullopt;
    if (!(detail::zt_slope(mix, c, u) > 0.0)) return std::nullopt;
    return complex(u, 0.0);
  }
  return v;
}

namespace detail {

/// Real root of z~(u) = lambda on an increasing branch.
inline double invert_branch(const SpectralMixture& mix, double c, const Branch& b, double lambda) {
  auto f = [&](double u) { return zt_value(mix, c, u) - lambda; };
  double lo = b.u_lo;
  double hi = b.u_hi;
  if (!std::isfinite(hi)) {
    hi = std::max(2.0 * lo, 1.0);
    while (f(hi) < 0.0) hi *= 2.0;
  }
  const double flo = lo == 0.0 ? -lambda : f(lo);
  const double fhi = f(hi);
  if (flo >= 0.0) return lo;
  if (fhi <= 0.0) return hi;
  return bracket_root(f, lo, hi, flo, fhi);
}

/// Table of (lambda(u), u, y_u) across one support interval.
struct BulkTable {
  std::vector<double> lambda, u, y;
};

inline BulkTable bulk_table(const SpectralMixture& mix, const Concentration& conc,
                            const Interval& u_iv, std::size_t points, double eps) {
  BulkTable t;
  const double width = u_iv.hi - u_iv.lo;
  const double eta = 1e-6 * width;
  for (std::size_t i = 0; i < points; ++i) {
    // cosine spacing clusters points near the edges where lambda(u) is flat
    const double s = 0.5 * (1.0 - std::cos(M_PI * (static_cast<double>(i) + 0.5) /
                                           static_cast<double>(points)));
    const double u = u_iv.lo + eta + s * (width - 2.0 * eta);
    double y = 0.0;
    try {
      y = solve_y(mix, conc, u, {eps, 1.0 / eps});
    } catch (const numerical_error&) {
      continue;  // y_u below the box near the ends
    }
    const double lam = phi(mix, conc.c, complex(u, y)).value.real();
    t.lambda.push_back(lam);
    t.u.push_back(u);
    t.y.push_back(y);
  }
  for (std::size_t i = 1; i < t.lambda.size(); ++i) {
    if (!(t.lambda[i] > t.lambda[i - 1])) {
      std::ostringstream msg;
      msg << "lambda(u) is not increasing on the u-interval [" << u_iv.lo << ", " << u_iv.hi
          << "]: lambda(" << t.u[i - 1] << ") = " << t.lambda[i - 1] << ", lambda(" << t.u[i]
          << ") = " << t.lambda[i];
      throw numerical_error(msg.str());
    }
  }
  return t;
}

inline complex table_guess(const BulkTable& t, double lambda) {
  if (t.lambda.empty()) return {0.0, 0.0};
  auto it = std::lower_bound(t.lambda.begin(), t.lambda.end(), lambda);
  if (it == t.lambda.begin()) return {t.u.front(), t.y.front()};
  if (it == t.lambda.end()) return {t.u.back(), t.y.back()};
  const std::size_t i = static_cast<std::size_t>(it - t.lambda.begin());
  const double w = (lambda - t.lambda[i - 1]) / (t.lambda[i] - t.lambda[i - 1]);
  return {t.u[i - 1] + w * (t.u[i] - t.u[i - 1]), t.y[i - 1] + w * (t.y[i] - t.y[i - 1])};
}

/// v for a lambda inside support interval k, from a bulk table and Newton.
inline complex bulk_v(const SpectralMixture& mix, const Concentration& conc, const SupportSet& s,
                      std::size_t k, const BulkTable& table, double lambda) {
  const complex guess = table_guess(table, lambda);
  if (auto v = newton_v(mix, conc.c, lambda, guess); v && v->imag() > 0.0) return *v;
  // Closest to an edge than the table resolves: y_lambda ~ 0 there.
  const Interval& iv = s.intervals[k];
  const Interval& uv = s.u_intervals[k];
  const double u_edge = (lambda - iv.lo < iv.hi - lambda) ? uv.lo : uv.hi;
  const double scale = std::max(1e-10, std::abs(u_edge) * 1e-6);
  if (auto v = newton_v(mix, conc.c, lambda, complex(u_edge, scale)); v && v->imag() > 0.0)
    return *v;
  return {u_edge, 0.0};
}

}  // namespace detail

/// v_lambda for a lambda strictly inside the support of F.
inline complex solve_v(const SpectralMixture& mix, const Concentration& conc, double lambda,
                       std::size_t table_points = 512, double eps = 1e-6) {
  const SupportScan scan = scan_support(mix, conc);
  const auto k = scan.support.interior_index(lambda);
  if (!k) throw std::domain_error("solve_v: lambda = " + std::to_string(lambda) +
                                  " is outside the support of F");
  const auto table = detail::bulk_table(mix, conc, scan.support.u_intervals[*k], table_points, eps);
  return detail::bulk_v(mix, conc, scan.support, *k, table, lambda);
}

/// Solves for m(x_j) at every grid point from scratch.
inline MpGridSolution solve_grid(const SpectralMixture& mix, const Concentration& conc,
                                 const Vector& grid, double eps = 1e-6,
                                 const std::vector<bool>* only = nullptr,
                                 MpGridSolution* into = nullptr) {
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    if (!(grid[j] > 0.0)) throw std::invalid_argument("solve_grid: grid must be positive");
    if (j > 0 && grid[j] < grid[j - 1])
      throw std::invalid_argument("solve_grid: grid must be ascending");
  }
  const double c = conc.c;
  const SupportScan scan = scan_support(mix, conc);
  MpGridSolution local;
  MpGridSolution& sol = into ? *into : local;
  if (!into) {
    sol.grid = grid;
    sol.c = c;
    sol.m.resize(grid.size());
    sol.v.resize(grid.size());
  }
  std::vector<std::vector<Eigen::Index>> bulk(scan.support.intervals.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    if (only && !(*only)[static_cast<std::size_t>(j)]) continue;
    const double x = grid[j];
    if (auto k = scan.support.interior_index(x)) {
      bulk[*k].push_back(j);
      continue;
    }
    const Branch* br = nullptr;
    for (const Branch& b : scan.branches)
      if (x >= b.z_lo && x <= b.z_hi) br = &b;
    if (!br) throw numerical_error("solve_grid: no branch covers x = " + std::to_string(x));
    const double u = detail::invert_branch(mix, c, *br, x);
    sol.v[j] = complex(u, 0.0);
    sol.m[j] = complex(m_breve_from_v(sol.v[j], c, x).real(), 0.0);
  }
  for (std::size_t k = 0; k < bulk.size(); ++k) {
    if (bulk[k].empty()) continue;
    const std::size_t points = std::clamp<std::size_t>(4 * bulk[k].size(), 64, 2048);
    const auto table = detail::bulk_table(mix, conc, scan.support.u_intervals[k], points, eps);
    for (Eigen::Index j : bulk[k]) {
      sol.v[j] = detail::bulk_v(mix, conc, scan.support, k, table, grid[j]);
      sol.m[j] = m_breve_from_v(sol.v[j], c, grid[j]);
      if (sol.v[j].imag() == 0.0) sol.m[j] = sol.m[j].real();
    }
  }
  return sol;
}

/// Re-solves the grid starting Newton from guessed m values; points where
/// Newton fails or lands on an invalid root are solved from scratch.
/// Returns the number of such fallbacks through `fallbacks` when given.
inline MpGridSolution refine_grid(const SpectralMixture& mix, const Concentration& conc,
                                  const Vector& grid, const ComplexVector& m_guess,
                                  double eps = 1e-6, int* fallbacks = nullptr) {
  const double c = conc.c;
  MpGridSolution sol;
  sol.grid = grid;
  sol.c = c;
  sol.m.resize(grid.size());
  sol.v.resize(grid.size());
  std::vector<bool> failed(static_cast<std::size_t>(grid.size()), false);
  int n_failed = 0;
  for (Eigen::Index j = 0; j < grid.size(); ++j) {
    const double x = grid[j];
    const complex s = 1.0 - c - c * x * m_guess[j];
    complex v0 = x / s;
    if (v0.imag() <= 1e-8 * std::abs(v0)) v0.imag(1e-8 * std::abs(v0));
    auto v = newton_v(mix, c, x, v0);
    if (!v) {
      failed[static_cast<std::size_t>(j)] = true;
      ++n_failed;
      continue;
    }
    sol.v[j] = *v;
    sol.m[j] = m_breve_from_v(*v, c, x);
    if (v->imag() == 0.0) sol.m[j] = sol.m[j].real();
  }
  if (n_failed > 0) solve_grid(mix, conc, grid, eps, &failed, &sol);
  if (fallbacks) *fallbacks = n_failed;
  return sol;
}

/// Largest |R(m_j)| over the grid.
inline double max_mp_residual(const SpectralMixture& mix, const MpGridSolution& sol) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < sol.grid.size(); ++j)
    worst = std::max(worst, std::abs(mp_residual(mix, sol.c, sol.grid[j], sol.m[j]).value));
  return worst;
}

/// Left end x_0 of the first trapezoid. With CdfOrigin::zero (x_0 = 0)
/// the density is taken to ramp linearly up from the origin, which credits
/// x_1 b_1 / (2 pi) of mass below x_1 even when the support starts just
/// below x_1. CdfOrigin::first_point (x_0 = x_1) credits none.
enum class CdfOrigin { first_point, zero };

namespace detail {
inline double cdf_left(const Vector& grid, Eigen::Index i, CdfOrigin origin) {
  if (i > 0) return grid[i - 1];
  return origin == CdfOrigin::zero ? 0.0 : grid[0];
}
}  // namespace detail

/// Trapezoidal c.d.f. at the grid points from the densities Im(m_j)/pi.
inline Vector cdf_trapezoid(const Vector& grid, const Vector& b, CdfOrigin origin = CdfOrigin::first_point) {
  const Eigen::Index g = grid.size();
  Vector cdf(g);
  double partial = 0.0;  // sum over j < i of (x_{j+1} - x_{j-1}) b_j
  for (Eigen::Index i = 0; i < g; ++i) {
    const double prev = detail::cdf_left(grid, i, origin);
    cdf[i] = (partial + (grid[i] - prev) * b[i]) / (2.0 * M_PI);
    if (i + 1 < g) partial += (grid[i + 1] - prev) * b[i];
  }
  return cdf;
}

inline Vector cdf_trapezoid(const MpGridSolution& sol, CdfOrigin origin = CdfOrigin::first_point) {
  return cdf_trapezoid(sol.grid, sol.m.imag(), origin);
}

/// Linear map b -> F of the trapezoid rule: F = C b.
inline Matrix trapezoid_matrix(const Vector& grid, CdfOrigin origin = CdfOrigin::first_point) {
  const Eigen::Index g = grid.size();
  Matrix cm = Matrix::Zero(g, g);
  for (Eigen::Index i = 0; i < g; ++i) {
    for (Eigen::Index j = 0; j < i; ++j)
      cm(i, j) = (grid[j + 1] - detail::cdf_left(grid, j, origin)) / (2.0 * M_PI);
    cm(i, i) = (grid[i] - detail::cdf_left(grid, i, origin)) / (2.0 * M_PI);
  }
  return cm;
}

}  // namespace nlshrink
