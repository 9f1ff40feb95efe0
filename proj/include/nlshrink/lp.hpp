// Dense bounded-variable primal simplex.
//
//   minimize    cost' x
//   subject to  a_i' x  (<= | >= | =)  rhs_i
//               lower <= x <= upper        (either side may be infinite)
//
// Two phases with artificial variables, Dantzig pricing, and Bland's rule
// after a run of degenerate pivots. The final basis is refactored with an
// LU decomposition so the returned point satisfies the constraints to
// working precision rather than to accumulated tableau round-off.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "linalg.hpp"

namespace nlshrink {

enum class RowSense { le, ge, eq };
enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
  }
  return "?";
}

struct LinearProgram {
  Vector cost;
  Matrix a;
  std::vector<RowSense> sense;
  Vector rhs;
  Vector lower;
  Vector upper;

  static constexpr double inf = std::numeric_limits<double>::infinity();

  LinearProgram() = default;
  LinearProgram(Eigen::Index rows, Eigen::Index vars)
      : cost(Vector::Zero(vars)),
        a(Matrix::Zero(rows, vars)),
        sense(static_cast<std::size_t>(rows), RowSense::le),
        rhs(Vector::Zero(rows)),
        lower(Vector::Zero(vars)),
        upper(Vector::Constant(vars, inf)) {}

  Eigen::Index rows() const { return a.rows(); }
  Eigen::Index vars() const { return a.cols(); }

  void validate() const {
    const Eigen::Index n = vars();
    if (cost.size() != n || lower.size() != n || upper.size() != n || rhs.size() != rows() ||
        static_cast<Eigen::Index>(sense.size()) != rows())
      throw dimension_error("LinearProgram: inconsistent dimensions");
    for (Eigen::Index j = 0; j < n; ++j)
      if (lower[j] > upper[j]) throw std::invalid_argument("LinearProgram: lower > upper");
  }

  /// Largest violation of rows and bounds at x.
  double violation(const Vector& x) const {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < vars(); ++j) {
      worst = std::max(worst, lower[j] - x[j]);
      worst = std::max(worst, x[j] - upper[j]);
    }
    const Vector ax = a * x;
    for (Eigen::Index i = 0; i < rows(); ++i) {
      const double r = ax[i] - rhs[i];
      switch (sense[static_cast<std::size_t>(i)]) {
        case RowSense::le: worst = std::max(worst, r); break;
        case RowSense::ge: worst = std::max(worst, -r); break;
        case RowSense::eq: worst = std::max(worst, std::abs(r)); break;
      }
    }
    return worst;
  }
};

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  Vector x;
  double objective = 0.0;
  int iterations = 0;
  double violation = 0.0;
};

struct LpOptions {
  int max_iterations = 0;  // 0: 50 (rows + vars)
  double optimality_tol = 1e-10;
  double pivot_tol = 1e-11;
  double feasibility_tol = 1e-9;
  int degenerate_switch = 50;  // consecutive degenerate pivots before Bland's rule
  bool bland_only = false;
};

namespace detail {

class BoundedSimplex {
 public:
  explicit BoundedSimplex(const LinearProgram& lp, const LpOptions& opt) : lp_(lp), opt_(opt) {
    build();
  }

  LpResult run() {
    LpResult res;
    const int limit = opt_.max_iterations > 0
                          ? opt_.max_iterations
                          : static_cast<int>(50 * (m_ + static_cast<Eigen::Index>(cols_)));
    // phase 1
    if (n_art_ > 0) {
      std::vector<double> c1(cols_, 0.0);
      for (std::size_t j = first_art_; j < cols_; ++j) c1[j] = 1.0;
      set_costs(c1);
      const LpStatus s = iterate(limit, res.iterations);
      if (s == LpStatus::iteration_limit) {
        res.status = s;
        return res;
      }
      double infeas = 0.0;
      for (Eigen::Index i = 0; i < m_; ++i)
        if (basis_[static_cast<std::size_t>(i)] >= first_art_) infeas += beta_[static_cast<std::size_t>(i)];
      if (infeas > opt_.feasibility_tol * (1.0 + rhs_scale_)) {
        res.status = LpStatus::infeasible;
        return res;
      }
      expel_artificials();
    }
    set_costs(cost_);
    res.status = iterate(limit, res.iterations);
    if (res.status != LpStatus::optimal) return res;
    polish();
    res.x = original_solution();
    res.objective = lp_.cost.dot(res.x);
    res.violation = lp_.violation(res.x);
    return res;
  }

 private:
  enum class At : unsigned char { lower, upper, basic };

  // Maps a standard-form column back to an original variable.
  struct ColumnMap {
    Eigen::Index var = -1;  // -1 for slack/artificial
    double sign = 1.0;      // x = offset + sign * column
  };

  double& t(Eigen::Index i, std::size_t j) { return tab_[static_cast<std::size_t>(i) * stride_ + j]; }

  void build() {
    lp_.validate();
    m_ = lp_.rows();
    const Eigen::Index n = lp_.vars();
    offset_ = Vector::Zero(n);
    std::vector<std::vector<double>> cols;
    auto add_col = [&](const Vector& coeffs, double ub, double c, ColumnMap map) {
      cols.emplace_back(coeffs.data(), coeffs.data() + coeffs.size());
      ub_.push_back(ub);
      cost_.push_back(c);
      map_.push_back(map);
    };
    Vector shift = Vector::Zero(m_);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double l = lp_.lower[j], u = lp_.upper[j];
      const Vector col = lp_.a.col(j);
      const double c = lp_.cost[j];
      if (std::isfinite(l)) {
        offset_[j] = l;
        shift += col * l;
        add_col(col, u - l, c, {j, 1.0});
      } else if (std::isfinite(u)) {
        offset_[j] = u;
        shift += col * u;
        add_col(-col, LinearProgram::inf, -c, {j, -1.0});
      } else {
        add_col(col, LinearProgram::inf, c, {j, 1.0});
        add_col(-col, LinearProgram::inf, -c, {j, -1.0});
      }
    }
    Vector b = lp_.rhs - shift;
    std::vector<Eigen::Index> slack_of(static_cast<std::size_t>(m_), -1);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const RowSense s = lp_.sense[static_cast<std::size_t>(i)];
      if (s == RowSense::eq) continue;
      Vector e = Vector::Zero(m_);
      e[i] = s == RowSense::le ? 1.0 : -1.0;
      slack_of[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(cols.size());
      add_col(e, LinearProgram::inf, 0.0, {});
    }
    row_sign_.assign(static_cast<std::size_t>(m_), 1.0);
    for (Eigen::Index i = 0; i < m_; ++i)
      if (b[i] < 0.0) row_sign_[static_cast<std::size_t>(i)] = -1.0;
    first_art_ = cols.size();
    basis_.assign(static_cast<std::size_t>(m_), 0);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const Eigen::Index s = slack_of[static_cast<std::size_t>(i)];
      const double sign = row_sign_[static_cast<std::size_t>(i)];
      if (s >= 0 && cols[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] * sign > 0.0) {
        basis_[static_cast<std::size_t>(i)] = static_cast<std::size_t>(s);
      } else {
        Vector e = Vector::Zero(m_);
        e[i] = sign;  // becomes +1 after the row sign flip
        basis_[static_cast<std::size_t>(i)] = cols.size();
        add_col(e, LinearProgram::inf, 0.0, {});
        ++n_art_;
      }
    }
    cols_ = cols.size();
    stride_ = cols_;
    tab_.assign(static_cast<std::size_t>(m_) * stride_, 0.0);
    a0_ = Matrix(m_, static_cast<Eigen::Index>(cols_));
    b0_ = Vector(m_);
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double sign = row_sign_[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < cols_; ++j) {
        const double v = sign * cols[j][static_cast<std::size_t>(i)];
        t(i, j) = v;
        a0_(i, static_cast<Eigen::Index>(j)) = v;
      }
      b0_[i] = sign * b[i];
    }
    rhs_scale_ = m_ > 0 ? b0_.cwiseAbs().maxCoeff() : 0.0;
    at_.assign(cols_, At::lower);
    beta_.assign(static_cast<std::size_t>(m_), 0.0);
    for (Eigen::Index i = 0; i < m_; ++i) {
      at_[basis_[static_cast<std::size_t>(i)]] = At::basic;
      beta_[static_cast<std::size_t>(i)] = b0_[i];
    }
    // The starting basis is an identity in the sign-adjusted rows, so the
    // tableau is already B^{-1} A.
    frozen_.assign(cols_, false);
  }

  void set_costs(const std::vector<double>& c) {
    phase_cost_ = c;
    d_.assign(cols_, 0.0);
    for (std::size_t j = 0; j < cols_; ++j) d_[j] = c[j];
    for (Eigen::Index i = 0; i < m_; ++i) {
      const double cb = c[basis_[static_cast<std::size_t>(i)]];
      if (cb == 0.0) continue;
      const double* row = &tab_[static_cast<std::size_t>(i) * stride_];
      for (std::size_t j = 0; j < cols_; ++j) d_[j] -= cb * row[j];
    }
  }

  LpStatus iterate(int limit, int& iterations) {
    int degenerate_run = 0;
    for (;;) {
      if (iterations >= limit) return LpStatus::iteration_limit;
      const bool bland = opt_.bland_only || degenerate_run >= opt_.degenerate_switch;
      // pricing
      std::size_t enter = cols_;
      double best = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) {
        if (at_[j] == At::basic || frozen_[j] || ub_[j] == 0.0) continue;
        double gain = 0.0;
        if (at_[j] == At::lower && d_[j] < -opt_.optimality_tol) gain = -d_[j];
        else if (at_[j] == At::upper && d_[j] > opt_.optimality_tol) gain = d_[j];
        if (gain <= 0.0) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (gain > best) {
          best = gain;
          enter = j;
        }
      }
      if (enter == cols_) return LpStatus::optimal;
      const double dir = at_[enter] == At::lower ? 1.0 : -1.0;
      // ratio test
      double theta = ub_[enter];
      Eigen::Index leave = -1;
      bool leave_to_upper = false;
      double leave_alpha = 0.0;
      for (Eigen::Index i = 0; i < m_; ++i) {
        const double alpha = t(i, enter) * dir;
        const std::size_t bi = basis_[static_cast<std::size_t>(i)];
        double limit_i = LinearProgram::inf;
        bool to_upper = false;
        if (alpha > opt_.pivot_tol) {
          limit_i = std::max(0.0, beta_[static_cast<std::size_t>(i)]) / alpha;
        } else if (alpha < -opt_.pivot_tol && std::isfinite(ub_[bi])) {
          limit_i = std::max(0.0, ub_[bi] - beta_[static_cast<std::size_t>(i)]) / -alpha;
          to_upper = true;
        } else {
          continue;
        }
        const double slack = std::isfinite(theta) ? 1e-12 * std::max(1.0, theta) : 0.0;
        bool take = false;
        if (limit_i < theta - slack) {
          take = true;
        } else if (limit_i <= theta + slack && leave >= 0) {
          take = bland ? bi < basis_[static_cast<std::size_t>(leave)]
                       : std::abs(alpha) > std::abs(leave_alpha);
        }
        if (take) {
          theta = limit_i;
          leave = i;
          leave_to_upper = to_upper;
          leave_alpha = alpha;
        }
      }
      if (!std::isfinite(theta)) return LpStatus::unbounded;
      ++iterations;
      degenerate_run = theta <= 1e-12 ? degenerate_run + 1 : 0;
      for (Eigen::Index i = 0; i < m_; ++i)
        beta_[static_cast<std::size_t>(i)] -= t(i, enter) * dir * theta;
      if (leave < 0) {  // bound flip
        at_[enter] = dir > 0 ? At::upper : At::lower;
        continue;
      }
      const std::size_t out = basis_[static_cast<std::size_t>(leave)];
      at_[out] = leave_to_upper ? At::upper : At::lower;
      const double entering_value = dir > 0 ? theta : ub_[enter] - theta;
      pivot(leave, enter);
      beta_[static_cast<std::size_t>(leave)] = entering_value;
    }
  }

  void pivot(Eigen::Index r, std::size_t s) {
    double* prow = &tab_[static_cast<std::size_t>(r) * stride_];
    const double inv = 1.0 / prow[s];
    for (std::size_t j = 0; j < cols_; ++j) prow[j] *= inv;
    prow[s] = 1.0;
    nz_.clear();
    for (std::size_t j = 0; j < cols_; ++j)
      if (prow[j] != 0.0) nz_.push_back(j);
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row = &tab_[static_cast<std::size_t>(i) * stride_];
      const double f = row[s];
      if (f == 0.0) continue;
      for (std::size_t j : nz_) row[j] -= f * prow[j];
      row[s] = 0.0;
    }
    const double f = d_[s];
    if (f != 0.0) {
      for (std::size_t j : nz_) d_[j] -= f * prow[j];
      d_[s] = 0.0;
    }
    at_[s] = At::basic;
    basis_[static_cast<std::size_t>(r)] = s;
  }

  void expel_artificials() {
    for (Eigen::Index i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < first_art_) continue;
      std::size_t best = cols_;
      double mag = 1e-9;
      for (std::size_t j = 0; j < first_art_; ++j) {
        if (at_[j] == At::basic) continue;
        if (std::abs(t(i, j)) > mag) {
          mag = std::abs(t(i, j));
          best = j;
        }
      }
      if (best == cols_) continue;  // redundant row; its artificial stays basic at zero
      const double value = at_[best] == At::upper ? ub_[best] : 0.0;
      at_[basis_[static_cast<std::size_t>(i)]] = At::lower;
      pivot(i, best);
      beta_[static_cast<std::size_t>(i)] = value;
    }
    for (std::size_t j = first_art_; j < cols_; ++j) {
      frozen_[j] = true;
      ub_[j] = 0.0;
    }
  }

  double nonbasic_value(std::size_t j) const { return at_[j] == At::upper ? ub_[j] : 0.0; }

  // Recompute basic values from the original standard-form data.
  void polish() {
    if (m_ == 0) return;
    Matrix bm(m_, m_);
    Vector r = b0_;
    for (std::size_t j = 0; j < cols_; ++j) {
      if (at_[j] == At::basic) continue;
      const double v = nonbasic_value(j);
      if (v != 0.0) r -= a0_.col(static_cast<Eigen::Index>(j)) * v;
    }
    for (Eigen::Index i = 0; i < m_; ++i)
      bm.col(i) = a0_.col(static_cast<Eigen::Index>(basis_[static_cast<std::size_t>(i)]));
    Eigen::PartialPivLU<Matrix> lu(bm);
    const Vector xb = lu.solve(r);
    if (!xb.allFinite()) return;
    const double err = (bm * xb - r).cwiseAbs().maxCoeff();
    if (err > 1e-9 * (1.0 + r.cwiseAbs().maxCoeff())) return;
    for (Eigen::Index i = 0; i < m_; ++i) {
      const std::size_t bi = basis_[static_cast<std::size_t>(i)];
      double v = xb[i];
      v = std::max(v, 0.0);
      if (std::isfinite(ub_[bi])) v = std::min(v, ub_[bi]);
      beta_[static_cast<std::size_t>(i)] = v;
    }
  }

  Vector original_solution() const {
    std::vector<double> value(cols_);
    for (std::size_t j = 0; j < cols_; ++j) value[j] = nonbasic_value(j);
    for (Eigen::Index i = 0; i < m_; ++i)
      value[basis_[static_cast<std::size_t>(i)]] = beta_[static_cast<std::size_t>(i)];
    Vector x = offset_;
    for (std::size_t j = 0; j < cols_; ++j)
      if (map_[j].var >= 0) x[map_[j].var] += map_[j].sign * value[j];
    return x;
  }

  const LinearProgram& lp_;
  LpOptions opt_;
  Eigen::Index m_ = 0;
  std::size_t cols_ = 0, stride_ = 0, first_art_ = 0;
  int n_art_ = 0;
  std::vector<double> tab_, beta_, d_, ub_, cost_, phase_cost_, row_sign_;
  std::vector<std::size_t> basis_, nz_;
  std::vector<At> at_;
  std::vector<bool> frozen_;
  std::vector<ColumnMap> map_;
  Vector offset_, b0_;
  Matrix a0_;
  double rhs_scale_ = 0.0;
};

}  // namespace detail

inline LpResult lp_solve(const LinearProgram& lp, const LpOptions& options = {}) {
  detail::BoundedSimplex solver(lp, options);
  return solver.run();
}

}  // namespace nlshrink
