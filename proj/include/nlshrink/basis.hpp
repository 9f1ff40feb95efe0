// Candidate population c.d.f.'s (atoms and linear-density ramps) and their
// Stieltjes-type transforms in closed form.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "linalg.hpp"

namespace nlshrink {

using complex = std::complex<double>;

enum class ElementKind { atom, ramp_up, ramp_down };

inline const char* to_string(ElementKind k) {
  switch (k) {
    case ElementKind::atom: return "atom";
    case ElementKind::ramp_up: return "ramp_up";
    case ElementKind::ramp_down: return "ramp_down";
  }
  return "?";
}

/// Value and first derivative of a transform at one point.
struct TransformValue {
  complex value;
  complex derivative;
};

/// One c.d.f. of the basis. Atoms use lo == hi == location.
struct BasisElement {
  ElementKind kind = ElementKind::atom;
  double lo = 1.0;
  double hi = 1.0;

  static BasisElement atom(double x) {
    if (!(x > 0.0) || !std::isfinite(x))
      throw std::invalid_argument("atom location must be positive and finite");
    return {ElementKind::atom, x, x};
  }
  static BasisElement ramp_up(double a, double b) { return ramp(ElementKind::ramp_up, a, b); }
  static BasisElement ramp_down(double a, double b) { return ramp(ElementKind::ramp_down, a, b); }

  double width() const { return hi - lo; }

  double cdf(double t) const {
    if (kind == ElementKind::atom) return t >= lo ? 1.0 : 0.0;
    if (t <= lo) return 0.0;
    if (t >= hi) return 1.0;
    const double h = width();
    if (kind == ElementKind::ramp_up) {
      const double r = (t - lo) / h;
      return r * r;
    }
    const double r = (hi - t) / h;
    return 1.0 - r * r;
  }

  double mean() const {
    switch (kind) {
      case ElementKind::atom: return lo;
      case ElementKind::ramp_up: return lo + 2.0 * width() / 3.0;
      case ElementKind::ramp_down: return lo + width() / 3.0;
    }
    return lo;
  }

  /// Density at t (zero for atoms, which have none).
  double density(double t) const {
    if (kind == ElementKind::atom || t < lo || t > hi) return 0.0;
    const double h = width();
    return kind == ElementKind::ramp_up ? 2.0 * (t - lo) / (h * h) : 2.0 * (hi - t) / (h * h);
  }

  bool on_support(double x) const { return x >= lo && x <= hi; }

  /// Stieltjes transform  m(z) = \int dM(t) / (t - z)  and its z-derivative.
  ///
  /// Ramps integrate a linear density against 1/(t - z); the antiderivative
  /// involves L = log((hi - z) / (lo - z)). For Im z > 0 both hi - z and
  /// lo - z lie in the open lower half-plane with arg(hi - z) > arg(lo - z),
  /// so the principal log of the ratio equals the difference of the
  /// arguments (in (0, pi)) and is continuous in z. The conjugate case is
  /// symmetric, and for real z off [lo, hi] the ratio is a positive real.
  /// Far from the ramp the closed form cancels badly, so a moment series in
  /// width / (z - lo) takes over.
  TransformValue stieltjes(complex z) const {
    if (kind == ElementKind::atom) {
      const complex r = 1.0 / (lo - z);
      return {r, r * r};
    }
    if (z.imag() == 0.0 && on_support(z.real()))
      throw std::domain_error("stieltjes: real argument " + std::to_string(z.real()) +
                              " lies on the support of a ramp element");
    const double h = width();
    const complex w = z - lo;
    if (std::abs(w) >= 4.0 * h) return moment_series(w, h);
    const complex L = std::log((hi - z) / (lo - z));
    const double k = 2.0 / (h * h);
    if (kind == ElementKind::ramp_up) {
      // \int (t - lo)/(t - z) dt = h + (z - lo) L
      const complex value = k * (h + w * L);
      const complex deriv = k * (L - 1.0 - w / (hi - z));
      return {value, deriv};
    }
    // \int (hi - t)/(t - z) dt = -h + (hi - z) L
    const complex value = k * (-h + (hi - z) * L);
    const complex deriv = k * (-L + (hi - z) / (lo - z) - 1.0);
    return {value, deriv};
  }

  /// m_{LG}(z) = \int t / (t - z) dG(t) = 1 + z m_G(z).
  complex mlg(complex z) const {
    if (kind == ElementKind::atom) return lo / (lo - z);
    return 1.0 + z * stieltjes(z).value;
  }

 private:
  static BasisElement ramp(ElementKind kind, double a, double b) {
    if (!(a > 0.0) || !(b > a) || !std::isfinite(b))
      throw std::invalid_argument("ramp needs 0 < lo < hi, got [" + std::to_string(a) + ", " +
                                  std::to_string(b) + "]");
    return {kind, a, b};
  }

  // m(z) = -sum_n mu_n / w^{n+1} with mu_n = \int_0^h s^n f(lo + s) ds.
  TransformValue moment_series(complex w, double h) const {
    const complex inv = 1.0 / w;
    const complex q = h * inv;
    complex qn = 1.0;  // (h/w)^n
    complex value = 0.0;
    complex deriv = 0.0;
    const double qabs = std::abs(q);
    double bound = 1.0;
    for (int n = 0; n < 60; ++n) {
      const double nn = n;
      const double mu = kind == ElementKind::ramp_up ? 2.0 / (nn + 2.0)
                                                     : 2.0 / ((nn + 1.0) * (nn + 2.0));
      value -= mu * qn;
      deriv += (nn + 1.0) * mu * qn;
      bound *= qabs;
      if (bound * (nn + 2.0) < 1e-18) break;
      qn *= q;
    }
    return {value * inv, deriv * inv * inv};
  }
};

/// Closed interval [lo, hi]; lo == hi denotes a point.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

enum class GridEnd {
  printed,     // x_i = lmin + (i-1)/p (lmax - lmin), i = 1..p
  append_max,  // the printed points followed by lmax itself
};

/// Equally spaced grid anchored at lmin. With GridEnd::append_max the last
/// point is exactly lmax, giving points + 1 values.
inline Vector build_grid(double lmin, double lmax, std::size_t points,
                         GridEnd end = GridEnd::append_max) {
  if (!(lmin > 0.0)) throw std::invalid_argument("build_grid: lower end must be positive");
  if (!(lmax > lmin)) throw std::invalid_argument("build_grid: degenerate interval");
  if (points < 2) throw std::invalid_argument("build_grid: need at least 2 points");
  const Eigen::Index count = static_cast<Eigen::Index>(points) + (end == GridEnd::append_max);
  Vector grid(count);
  const double step = (lmax - lmin) / static_cast<double>(points);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(points); ++i)
    grid[i] = lmin + static_cast<double>(i) * step;
  if (end == GridEnd::append_max) grid[count - 1] = lmax;
  return grid;
}

/// Atoms at every grid point, then increasing ramps, then decreasing ramps
/// on each grid cell: K = 3 G - 2 elements for G grid points.
inline std::vector<BasisElement> build_basis(const Vector& grid) {
  if (grid.size() < 2) throw std::invalid_argument("build_basis: need at least 2 grid points");
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw std::invalid_argument("build_basis: grid must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw std::invalid_argument("build_basis: grid must be strictly ascending");
  }
  std::vector<BasisElement> basis;
  basis.reserve(static_cast<std::size_t>(3 * grid.size() - 2));
  for (Eigen::Index i = 0; i < grid.size(); ++i) basis.push_back(BasisElement::atom(grid[i]));
  for (Eigen::Index i = 1; i < grid.size(); ++i)
    basis.push_back(BasisElement::ramp_up(grid[i - 1], grid[i]));
  for (Eigen::Index i = 1; i < grid.size(); ++i)
    basis.push_back(BasisElement::ramp_down(grid[i - 1], grid[i]));
  return basis;
}

/// Probability measure sum_k w_k M_k over a fixed basis.
class SpectralMixture {
 public:
  SpectralMixture() = default;

  SpectralMixture(std::vector<BasisElement> basis, Vector weights)
      : basis_(std::move(basis)), weights_(std::move(weights)) {
    if (static_cast<Eigen::Index>(basis_.size()) != weights_.size())
      throw dimension_error("mixture: " + std::to_string(weights_.size()) + " weights for " +
                            std::to_string(basis_.size()) + " basis elements");
    if (basis_.empty()) throw std::invalid_argument("mixture: empty basis");
    if (!weights_.allFinite() || weights_.minCoeff() < 0.0)
      throw std::invalid_argument("mixture: weights must be finite and nonnegative");
    if (std::abs(weights_.sum() - 1.0) > 1e-10)
      throw std::invalid_argument("mixture: weights must sum to one");
    refresh_active();
  }

  /// Discrete spectrum with the given atoms and probabilities.
  static SpectralMixture atoms(const std::vector<double>& locations, const Vector& weights) {
    std::vector<BasisElement> basis;
    for (double x : locations) basis.push_back(BasisElement::atom(x));
    return {std::move(basis), weights};
  }

  /// Empirical distribution of a set of (not necessarily distinct) values.
  static SpectralMixture empirical(const Vector& values) {
    std::vector<double> sorted(values.data(), values.data() + values.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> locs;
    std::vector<double> mass;
    for (double v : sorted) {
      if (!locs.empty() && v == locs.back()) {
        mass.back() += 1.0;
      } else {
        locs.push_back(v);
        mass.push_back(1.0);
      }
    }
    Vector w = Eigen::Map<Vector>(mass.data(), static_cast<Eigen::Index>(mass.size()));
    return atoms(locs, w / static_cast<double>(values.size()));
  }

  const std::vector<BasisElement>& basis() const { return basis_; }
  const Vector& weights() const { return weights_; }
  std::size_t size() const { return basis_.size(); }
  const std::vector<std::size_t>& active() const { return active_; }

  /// m_H(z) = \int dH(t)/(t - z) with derivative.
  TransformValue stieltjes(complex z) const {
    TransformValue sum{0.0, 0.0};
    for (std::size_t k : active_) {
      const TransformValue t = basis_[k].stieltjes(z);
      sum.value += weights_[static_cast<Eigen::Index>(k)] * t.value;
      sum.derivative += weights_[static_cast<Eigen::Index>(k)] * t.derivative;
    }
    return sum;
  }

  /// m_{LH}(z) = 1 + z m_H(z) with derivative m_H + z m_H'.
  TransformValue mlh(complex z) const {
    const TransformValue m = stieltjes(z);
    return {1.0 + z * m.value, m.value + z * m.derivative};
  }

  double cdf(double t) const {
    double s = 0.0;
    for (std::size_t k : active_) s += weights_[static_cast<Eigen::Index>(k)] * basis_[k].cdf(t);
    return s;
  }

  double mean() const {
    double s = 0.0;
    for (std::size_t k : active_) s += weights_[static_cast<Eigen::Index>(k)] * basis_[k].mean();
    return s;
  }

  /// Support of the measure as ascending disjoint closed intervals
  /// (isolated atoms appear as degenerate intervals).
  std::vector<Interval> support() const {
    std::vector<Interval> pieces;
    for (std::size_t k : active_) pieces.push_back({basis_[k].lo, basis_[k].hi});
    std::sort(pieces.begin(), pieces.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const Interval& iv : pieces) {
      if (!merged.empty() && iv.lo <= merged.back().hi)
        merged.back().hi = std::max(merged.back().hi, iv.hi);
      else
        merged.push_back(iv);
    }
    return merged;
  }

  bool on_support(double x) const {
    for (std::size_t k : active_)
      if (basis_[k].on_support(x)) return true;
    return false;
  }

 private:
  void refresh_active() {
    active_.clear();
    for (std::size_t k = 0; k < basis_.size(); ++k)
      if (weights_[static_cast<Eigen::Index>(k)] > 0.0) active_.push_back(k);
  }

  std::vector<BasisElement> basis_;
  Vector weights_;
  std::vector<std::size_t> active_;
};

/// m_{LG}(z) of a single basis element; z must avoid the element's support
/// when real.
inline complex element_mLG(const BasisElement& e, complex z) {
  if (z.imag() == 0.0 && e.on_support(z.real()))
    throw std::domain_error("element_mLG: real argument on the element support");
  return e.mlg(z);
}

/// Weighted sum of element_mLG over the mixture.
inline complex mixture_mLH(const SpectralMixture& mix, complex z) {
  complex s = 0.0;
  for (std::size_t k : mix.active())
    s += mix.weights()[static_cast<Eigen::Index>(k)] * element_mLG(mix.basis()[k], z);
  return s;
}

}  // namespace nlshrink
