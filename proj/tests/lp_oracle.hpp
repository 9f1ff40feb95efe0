#pragma once
// Brute-force LP oracle and random tiny LPs, shared by the LP tests and the
// acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "nlshrink/lp.hpp"

namespace nlshrink::oracle {

inline constexpr double inf = LinearProgram::inf;

// Minimum over all feasible vertices of {G x <= h} with equality rows
// checked in both directions. Returns +inf when no vertex is feasible.
inline double vertex_enumeration(const LinearProgram& lp) {
  const Eigen::Index n = lp.vars();
  std::vector<Vector> g;
  std::vector<double> h;
  std::vector<bool> is_eq;
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    const RowSense s = lp.sense[static_cast<std::size_t>(i)];
    const double sign = s == RowSense::ge ? -1.0 : 1.0;
    g.push_back(sign * lp.a.row(i).transpose());
    h.push_back(sign * lp.rhs[i]);
    is_eq.push_back(s == RowSense::eq);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(lp.upper[j])) {
      g.push_back(Vector::Unit(n, j));
      h.push_back(lp.upper[j]);
      is_eq.push_back(false);
    }
    if (std::isfinite(lp.lower[j])) {
      g.push_back(-Vector::Unit(n, j));
      h.push_back(-lp.lower[j]);
      is_eq.push_back(false);
    }
  }
  const std::size_t total = g.size();
  double best = inf;
  std::vector<std::size_t> pick(static_cast<std::size_t>(n));
  // iterate over all n-subsets
  std::vector<bool> mask(total, false);
  std::fill(mask.end() - n, mask.end(), true);
  do {
    bool ok = true;
    std::size_t k = 0;
    for (std::size_t i = 0; i < total; ++i)
      if (mask[i]) pick[k++] = i;
    Matrix m(n, n);
    Vector r(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      m.row(a) = g[pick[static_cast<std::size_t>(a)]].transpose();
      r[a] = h[pick[static_cast<std::size_t>(a)]];
    }
    Eigen::FullPivLU<Matrix> lu(m);
    if (lu.rank() < n) continue;
    const Vector x = lu.solve(r);
    for (std::size_t i = 0; i < total && ok; ++i) {
      const double val = g[i].dot(x) - h[i];
      if (val > 1e-9 || (is_eq[i] && val < -1e-9)) ok = false;
    }
    if (ok) best = std::min(best, lp.cost.dot(x));
  } while (std::next_permutation(mask.begin(), mask.end()));
  return best;
}

inline LinearProgram random_lp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nv(1, 6), nr(0, 8), kind(0, 9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = nv(rng);
  const int m = nr(rng);
  LinearProgram lp(m, n);
  Vector anchor(n);
  for (int j = 0; j < n; ++j) {
    anchor[j] = 2.0 * u(rng);
    lp.cost[j] = u(rng);
    lp.lower[j] = -3.0 + u(rng);
    lp.upper[j] = 3.0 + u(rng);
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) lp.a(i, j) = kind(rng) < 3 ? 0.0 : u(rng);
    const double at = lp.a.row(i).dot(anchor);
    const int k = kind(rng);
    if (k < 4) {
      lp.sense[static_cast<std::size_t>(i)] = RowSense::le;
      lp.rhs[i] = at + std::abs(u(rng));
    } else if (k < 8) {
      lp.sense[static_cast<std::size_t>(i)] = RowSense::ge;
      lp.rhs[i] = at - std::abs(u(rng));
    } else {
      lp.sense[static_cast<std::size_t>(i)] = RowSense::eq;
      lp.rhs[i] = at;
    }
    // occasionally infeasible
    if (kind(rng) == 0 && lp.sense[static_cast<std::size_t>(i)] != RowSense::eq)
      lp.rhs[i] += lp.sense[static_cast<std::size_t>(i)] == RowSense::le ? -20.0 : 20.0;
  }
  return lp;
}

// Moves finite bounds into rows so the solver sees free and one-sided variables.
inline LinearProgram bounds_as_rows(const LinearProgram& lp, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 3);
  std::vector<std::tuple<Eigen::Index, RowSense, double>> extra;
  LinearProgram out = lp;
  for (Eigen::Index j = 0; j < lp.vars(); ++j) {
    switch (coin(rng)) {
      case 0:
        extra.emplace_back(j, RowSense::ge, lp.lower[j]);
        out.lower[j] = -inf;
        break;
      case 1:
        extra.emplace_back(j, RowSense::ge, lp.lower[j]);
        extra.emplace_back(j, RowSense::le, lp.upper[j]);
        out.lower[j] = -inf;
        out.upper[j] = inf;
        break;
      case 2:
        extra.emplace_back(j, RowSense::le, lp.upper[j]);
        out.upper[j] = inf;
        break;
      default: break;
    }
  }
  const Eigen::Index m0 = lp.rows();
  out.a.conservativeResize(m0 + static_cast<Eigen::Index>(extra.size()), lp.vars());
  out.rhs.conservativeResize(out.a.rows());
  for (std::size_t e = 0; e < extra.size(); ++e) {
    const auto& [j, s, r] = extra[e];
    const Eigen::Index row = m0 + static_cast<Eigen::Index>(e);
    out.a.row(row).setZero();
    out.a(row, j) = 1.0;
    out.sense.push_back(s);
    out.rhs[row] = r;
  }
  return out;
}

}  // namespace nlshrink::oracle

