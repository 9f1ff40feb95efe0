// Estimation of the population spectrum H by matching the trapezoidal
// c.d.f. of the Marcenko-Pastur solution to the sample spectrum in sup
// norm, using sequential linear programming over the basis weights.
//
// Every accepted iterate is an exact solution of the Marcenko-Pastur
// equation for its weights: after each LP step the boundary values m_j are
// re-solved by Newton from the linear prediction (falling back to a cold
// solve). The LP itself comes in two forms:
//
//   reduced  the linearized constraints D_j dm_j = sum_k T_jk dw_k are
//            used to eliminate dm, leaving (dw, t) only;
//   full     (da, db, dw, t, sigma) with the linearized constraints kept as
//            rows and an l_inf slack sigma penalized in the objective.
#pragma once

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lp.hpp"
#include "mp_forward.hpp"

namespace nlshrink {

struct EmpiricalSpectrumTarget {
  Vector eigenvalues;  // ascending
  Vector grid;
  Vector values;  // target c.d.f. at the grid points
};

/// Target c.d.f. with F(lambda_i) = i/p - 1/(2p), interpolated linearly onto
/// the grid and held constant outside [lambda_1, lambda_p].
inline EmpiricalSpectrumTarget empirical_target(const Vector& eigs, const Vector& grid) {
  const Eigen::Index p = eigs.size();
  if (p < 1) throw std::invalid_argument("empirical_target: no eigenvalues");
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(eigs[i] > 0.0)) throw std::invalid_argument("empirical_target: eigenvalues must be positive");
    if (i > 0 && eigs[i] < eigs[i - 1])
      throw std::invalid_argument("empirical_target: eigenvalues must be ascending");
  }
  const double pd = static_cast<double>(p);
  auto level = [&](Eigen::Index i) { return (static_cast<double>(i) + 0.5) / pd; };
  EmpiricalSpectrumTarget t{eigs, grid, Vector(grid.size())};
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    if (x <= eigs[0]) {
      t.values[g] = level(0);
      continue;
    }
    if (x >= eigs[p - 1]) {
      t.values[g] = level(p - 1);
      continue;
    }
    // last index with eigs[i] <= x; ties resolve to the highest level
    const auto it = std::upper_bound(eigs.data(), eigs.data() + p, x);
    const Eigen::Index hi = it - eigs.data();
    const Eigen::Index lo = hi - 1;
    if (eigs[lo] == x) {
      t.values[g] = level(lo);
      continue;
    }
    const double s = (x - eigs[lo]) / (eigs[hi] - eigs[lo]);
    t.values[g] = level(lo) + s * (level(hi) - level(lo));
  }
  return t;
}

/// Sup-norm distance between the trapezoidal c.d.f. of `sol` and the target.
inline double objective(const MpGridSolution& sol, const EmpiricalSpectrumTarget& target,
                        CdfOrigin origin = CdfOrigin::first_point) {
  if (sol.grid.size() != target.values.size())
    throw dimension_error("objective: grid and target lengths differ");
  return (cdf_trapezoid(sol, origin) - target.values).cwiseAbs().maxCoeff();
}

enum class SlpFormulation { reduced, full };
enum class TrustNorm { l1, linf };

struct FitOptions {
  int max_iter = 200;
  int restarts = 10;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;
  std::size_t grid_cap = 0;  // 0: one grid point per eigenvalue
  double rho_initial = 0.05;
  double rho_min = 1e-6;
  double rho_max = 0.1;
  double rho_shrink = 0.5;
  double rho_grow = 1.5;
  double improvement_tol = 1e-7;
  // Stall test: once stall_window iterations together gain less than
  // stall_fraction / p (the target c.d.f. moves in steps of 1/p), the start
  // ends. It counts as converged when the objective is at most stall_level / p
  // and is restarted otherwise. stall_window = 0 disables the test.
  int stall_window = 25;
  double stall_fraction = 0.01;
  double stall_level = 5.0;
  double residual_tol = 1e-6;
  double slack_penalty = 1e4;
  SlpFormulation formulation = SlpFormulation::reduced;
  TrustNorm trust_norm = TrustNorm::l1;
  CdfOrigin cdf_origin = CdfOrigin::first_point;
  bool record_trace = false;

  void validate() const {
    if (max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
    if (restarts < 0 || restarts > 50) throw std::invalid_argument("restarts must lie in [0, 50]");
    if (stall_window < 0 || !(stall_fraction >= 0.0) || !(stall_level > 0.0)) throw std::invalid_argument("invalid stall test");
    if (!(epsilon > 0.0) || epsilon > 1e-2) throw std::invalid_argument("epsilon must lie in (0, 1e-2]");
    if (!(rho_min > 0.0) || !(rho_initial >= rho_min) || !(rho_max >= rho_initial))
      throw std::invalid_argument("trust region bounds must satisfy 0 < rho_min <= rho_initial <= rho_max");
  }
};

struct SlpState {
  Vector w;
  ComplexVector m;  // a + i b
  double objective = 0.0;
  int iteration = 0;
  bool converged = false;

  Vector a() const { return m.real(); }
  Vector b() const { return m.imag(); }
};

struct IterationRecord {
  int start = 0;
  int iteration = 0;
  double objective = 0.0;     // after the step decision
  double candidate = 0.0;     // objective of the trial point
  double predicted = 0.0;     // LP value t
  double rho = 0.0;           // radius used for this step
  bool accepted = false;
  double weight_sum = 1.0;
  double min_weight = 0.0;
  double residual = 0.0;
};

struct FitDiagnostics {
  int iterations = 0;   // over all starts
  int starts = 0;       // 1 + restarts used
  bool converged = false;
  bool first_try = false;
  double residual = 0.0;
  int cold_solves = 0;  // grid points re-solved from scratch
  int lp_failures = 0;
  double seconds = 0.0;
  std::vector<IterationRecord> trace;
};

struct FitResult {
  SpectralMixture mixture;
  MpGridSolution solution;
  EmpiricalSpectrumTarget target;
  double objective = 0.0;
  FitDiagnostics diagnostics;
};

/// Linearization of the constraints R_j(m_j, w) = m_j - sum_k w_k T_jk(m_j)
/// around (m, w), where T_jk = m_{M_k}(zeta_j) / s_j, s_j = 1 - c - c x_j m_j
/// and zeta_j = x_j / s_j.
struct ConstraintJacobian {
  ComplexVector residual;  // R_j
  ComplexVector dm;        // dR_j / dm_j (complex derivative)
  Eigen::MatrixXcd dw;     // dR_j / dw_k = -T_jk
};

namespace detail {

/// Element transform at zeta approached from C+; real zeta inside a ramp
/// takes the boundary value from above.
inline TransformValue boundary_transform(const BasisElement& e, complex zeta) {
  if (zeta.imag() > 0.0) return e.stieltjes(zeta);
  return e.stieltjes(complex(zeta.real(), 1e-200));
}

}  // namespace detail

inline ConstraintJacobian constraint_jacobian(const std::vector<BasisElement>& basis,
                                              const Vector& w, const Vector& grid, double c,
                                              const ComplexVector& m) {
  const Eigen::Index g = grid.size();
  const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
  if (w.size() != k || m.size() != g) throw dimension_error("constraint_jacobian: size mismatch");
  ConstraintJacobian jac{ComplexVector(g), ComplexVector(g), Eigen::MatrixXcd(g, k)};
  for (Eigen::Index j = 0; j < g; ++j) {
    const double x = grid[j];
    const complex s = 1.0 - c - c * x * m[j];
    const complex zeta = x / s;
    const complex dzeta = c * x * x / (s * s);  // d zeta / dm
    const complex ds = -c * x;                  // d s / dm
    complex sum = 0.0, dsum = 0.0;
    for (Eigen::Index q = 0; q < k; ++q) {
      const TransformValue tv = detail::boundary_transform(basis[static_cast<std::size_t>(q)], zeta);
      const complex t = tv.value / s;
      jac.dw(j, q) = -t;
      sum += w[q] * t;
      dsum += w[q] * (tv.derivative * dzeta / s - tv.value * ds / (s * s));
    }
    jac.residual[j] = m[j] - sum;
    jac.dm[j] = 1.0 - dsum;
  }
  return jac;
}

/// Full linearized program in (da, db, dw, t, sigma), in this column order.
struct LinearizedProgram {
  LinearProgram lp;
  Eigen::Index grid_points = 0;
  Eigen::Index weights = 0;

  Eigen::Index col_a(Eigen::Index j) const { return j; }
  Eigen::Index col_b(Eigen::Index j) const { return grid_points + j; }
  Eigen::Index col_w(Eigen::Index k) const { return 2 * grid_points + k; }
  Eigen::Index col_t() const { return 2 * grid_points + weights; }
  Eigen::Index col_sigma() const { return col_t() + 1; }
};

inline LinearizedProgram linearize_constraints(const SlpState& state,
                                               const std::vector<BasisElement>& basis,
                                               const Vector& grid, const Concentration& conc,
                                               const EmpiricalSpectrumTarget& target, double rho,
                                               double eps = 1e-6, double slack_penalty = 1e4,
                                               CdfOrigin origin = CdfOrigin::first_point) {
  const Eigen::Index g = grid.size();
  const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
  const ConstraintJacobian jac = constraint_jacobian(basis, state.w, grid, conc.c, state.m);
  for (Eigen::Index j = 0; j < g; ++j)
    if (!std::isfinite(std::abs(jac.dm[j])) || std::abs(jac.dm[j]) == 0.0)
      throw numerical_error("linearize_constraints: singular linearization at grid index " +
                            std::to_string(j));
  const Matrix cm = trapezoid_matrix(grid, origin);
  const Vector f = cm * state.m.imag();
  LinearizedProgram out;
  out.grid_points = g;
  out.weights = k;
  const Eigen::Index vars = 2 * g + k + 2;
  const Eigen::Index rows = 4 * g + 2 * g + 1;
  LinearProgram& lp = out.lp;
  lp = LinearProgram(rows, vars);
  lp.cost[out.col_t()] = 1.0;
  lp.cost[out.col_sigma()] = slack_penalty;
  Eigen::Index r = 0;
  // |Re/Im (R_j + D_j dm_j + sum_k dR/dw_k dw_k)| <= sigma
  for (Eigen::Index j = 0; j < g; ++j) {
    const complex d = jac.dm[j];
    for (int part = 0; part < 2; ++part) {
      // real part: Re D da - Im D db ; imaginary part: Im D da + Re D db
      const double ca = part == 0 ? d.real() : d.imag();
      const double cb = part == 0 ? -d.imag() : d.real();
      const double r0 = part == 0 ? jac.residual[j].real() : jac.residual[j].imag();
      for (double sign : {1.0, -1.0}) {
        lp.a(r, out.col_a(j)) = sign * ca;
        lp.a(r, out.col_b(j)) = sign * cb;
        for (Eigen::Index q = 0; q < k; ++q) {
          const complex dw = jac.dw(j, q);
          lp.a(r, out.col_w(q)) = sign * (part == 0 ? dw.real() : dw.imag());
        }
        lp.a(r, out.col_sigma()) = -1.0;
        lp.sense[static_cast<std::size_t>(r)] = RowSense::le;
        lp.rhs[r] = -sign * r0;
        ++r;
      }
    }
  }
  // |F + C db - target| <= t
  for (Eigen::Index i = 0; i < g; ++i) {
    for (double sign : {1.0, -1.0}) {
      for (Eigen::Index j = 0; j <= i; ++j) lp.a(r, out.col_b(j)) = sign * cm(i, j);
      lp.a(r, out.col_t()) = -1.0;
      lp.sense[static_cast<std::size_t>(r)] = RowSense::le;
      lp.rhs[r] = sign * (target.values[i] - f[i]);
      ++r;
    }
  }
  for (Eigen::Index q = 0; q < k; ++q) lp.a(r, out.col_w(q)) = 1.0;
  lp.sense[static_cast<std::size_t>(r)] = RowSense::eq;
  lp.rhs[r] = 1.0 - state.w.sum();
  const double big = 1.0 / eps;
  for (Eigen::Index j = 0; j < g; ++j) {
    const double a = state.m[j].real(), b = state.m[j].imag();
    lp.lower[out.col_a(j)] = std::max(-rho, -big - a);
    lp.upper[out.col_a(j)] = std::max(lp.lower[out.col_a(j)], std::min(rho, big - a));
    // b_j >= eps where the current point already satisfies it, b_j >= b_j otherwise
    lp.lower[out.col_b(j)] = std::max(-rho, std::min(eps, b) - b);
    lp.upper[out.col_b(j)] = std::max(lp.lower[out.col_b(j)], std::min(rho, big - b));
  }
  for (Eigen::Index q = 0; q < k; ++q) {
    lp.lower[out.col_w(q)] = std::max(-rho, -state.w[q]);
    lp.upper[out.col_w(q)] = rho;
  }
  lp.lower[out.col_t()] = 0.0;
  lp.lower[out.col_sigma()] = 0.0;
  return out;
}

namespace detail {

/// Reduced program in (dw, t): dm = S dw with S_jk = T_jk / D_j, so that
/// F + C Im(S) dw is the linearized c.d.f.
struct ReducedProgram {
  LinearProgram lp;
  Eigen::MatrixXcd sensitivity;  // S
};

inline ReducedProgram linearize_reduced(const SlpState& state, const std::vector<BasisElement>& basis,
                                        const Vector& grid, const Concentration& conc,
                                        const EmpiricalSpectrumTarget& target, const Matrix& cm,
                                        double rho, TrustNorm norm) {
  const Eigen::Index g = grid.size();
  const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
  ConstraintJacobian jac = constraint_jacobian(basis, state.w, grid, conc.c, state.m);
  ReducedProgram out;
  out.sensitivity.resize(g, k);
  for (Eigen::Index j = 0; j < g; ++j) {
    const complex d = jac.dm[j];
    if (!std::isfinite(std::abs(d)) || std::abs(d) == 0.0)
      throw numerical_error("linearize_constraints: singular linearization at grid index " +
                            std::to_string(j));
    out.sensitivity.row(j) = -jac.dw.row(j) / d;
  }
  const Matrix gmat = cm * out.sensitivity.imag();
  const Vector f = cm * state.m.imag();
  LinearProgram& lp = out.lp;
  if (norm == TrustNorm::linf) {
    // columns: dw (k), t
    lp = LinearProgram(2 * g + 1, k + 1);
    lp.cost[k] = 1.0;
    for (Eigen::Index i = 0; i < g; ++i) {
      lp.a.row(2 * i).head(k) = gmat.row(i);
      lp.a.row(2 * i + 1).head(k) = -gmat.row(i);
      lp.a(2 * i, k) = -1.0;
      lp.a(2 * i + 1, k) = -1.0;
      lp.rhs[2 * i] = target.values[i] - f[i];
      lp.rhs[2 * i + 1] = f[i] - target.values[i];
    }
    lp.a.row(2 * g).head(k).setOnes();
    lp.sense[static_cast<std::size_t>(2 * g)] = RowSense::eq;
    lp.rhs[2 * g] = 1.0 - state.w.sum();
    for (Eigen::Index q = 0; q < k; ++q) {
      lp.lower[q] = std::max(-rho, -state.w[q]);
      lp.upper[q] = rho;
    }
    lp.lower[k] = 0.0;
    return out;
  }
  // Columns: dw+ (k), dw- (k), tau = f0 - t with tau in [0, f0]. Writing the
  // level through tau makes every sup-norm row nonnegative on the right, so
  // the slack basis is feasible at dw = 0 and phase 1 is trivial. The l1
  // radius bounds the mass moved between basis elements.
  const double f0 = (f - target.values).cwiseAbs().maxCoeff();
  lp = LinearProgram(2 * g + 2, 2 * k + 1);
  lp.cost[2 * k] = -1.0;
  for (Eigen::Index i = 0; i < g; ++i) {
    const double e = target.values[i] - f[i];
    lp.a.row(2 * i).head(k) = gmat.row(i);
    lp.a.row(2 * i).segment(k, k) = -gmat.row(i);
    lp.a.row(2 * i + 1).head(k) = -gmat.row(i);
    lp.a.row(2 * i + 1).segment(k, k) = gmat.row(i);
    lp.a(2 * i, 2 * k) = 1.0;
    lp.a(2 * i + 1, 2 * k) = 1.0;
    lp.rhs[2 * i] = std::max(0.0, e + f0);
    lp.rhs[2 * i + 1] = std::max(0.0, f0 - e);
  }
  lp.a.row(2 * g).head(k).setOnes();
  lp.a.row(2 * g).segment(k, k).setConstant(-1.0);
  lp.sense[static_cast<std::size_t>(2 * g)] = RowSense::eq;
  lp.rhs[2 * g] = 0.0;
  lp.a.row(2 * g + 1).head(2 * k).setOnes();
  lp.rhs[2 * g + 1] = 2.0 * rho;
  for (Eigen::Index q = 0; q < k; ++q) {
    lp.upper[q] = rho;
    lp.upper[k + q] = std::min(rho, state.w[q]);
  }
  lp.upper[2 * k] = f0;
  return out;
}

struct StepProposal {
  Vector dw;
  ComplexVector dm;
  double predicted = 0.0;
  bool ok = false;
};

inline StepProposal propose_step(const SlpState& state, const std::vector<BasisElement>& basis,
                                 const Vector& grid, const Concentration& conc,
                                 const EmpiricalSpectrumTarget& target, const Matrix& cm,
                                 double rho, const FitOptions& opt) {
  StepProposal step;
  if (opt.formulation == SlpFormulation::reduced) {
    const ReducedProgram rp = linearize_reduced(state, basis, grid, conc, target, cm, rho, opt.trust_norm);
    const LpResult res = lp_solve(rp.lp);
    if (res.status != LpStatus::optimal) return step;
    const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
    if (opt.trust_norm == TrustNorm::linf) {
      step.dw = res.x.head(k);
      step.predicted = res.x[k];
    } else {
      step.dw = res.x.head(k) - res.x.segment(k, k);
      step.predicted = state.objective - res.x[2 * k];
    }
    step.dm = rp.sensitivity * step.dw.cast<complex>();
  } else {
    const LinearizedProgram lin =
        linearize_constraints(state, basis, grid, conc, target, rho, opt.epsilon, opt.slack_penalty,
                              opt.cdf_origin);
    const LpResult res = lp_solve(lin.lp);
    if (res.status != LpStatus::optimal) return step;
    const Eigen::Index g = grid.size();
    step.dw = res.x.segment(lin.col_w(0), lin.weights);
    step.dm = ComplexVector(g);
    for (Eigen::Index j = 0; j < g; ++j)
      step.dm[j] = complex(res.x[lin.col_a(j)], res.x[lin.col_b(j)]);
    step.predicted = res.x[lin.col_t()];
  }
  step.ok = true;
  return step;
}

/// Projects onto the simplex after an LP step: rounding-level negatives are
/// zeroed and the sum restored.
inline Vector clean_weights(const Vector& w) {
  Vector out = w.cwiseMax(0.0);
  for (Eigen::Index k = 0; k < out.size(); ++k)
    if (out[k] < 1e-15) out[k] = 0.0;
  return out / out.sum();
}

struct StartOutcome {
  SlpState state;
  MpGridSolution solution;
  double residual = 0.0;
};

}  // namespace detail

/// Grid used by fit_spectrum for a sorted sample spectrum.
inline Vector fit_grid(const Vector& eigs, std::size_t grid_cap = 0) {
  const std::size_t p = static_cast<std::size_t>(eigs.size());
  const std::size_t points = grid_cap > 0 ? std::min(p, grid_cap) : p;
  return build_grid(eigs[0], eigs[eigs.size() - 1], points, GridEnd::append_max);
}

inline FitResult fit_spectrum(const Vector& eigs, const Concentration& conc,
                              const FitOptions& opt = {}) {
  opt.validate();
  const auto clock_start = std::chrono::steady_clock::now();
  if (eigs.size() < 2) throw dimension_error("fit_spectrum: need at least 2 eigenvalues");
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (!(eigs[i] > 0.0) || !std::isfinite(eigs[i]))
      throw std::invalid_argument("fit_spectrum: eigenvalues must be positive and finite");
    if (i > 0 && eigs[i] < eigs[i - 1])
      throw std::invalid_argument("fit_spectrum: eigenvalues must be ascending");
  }
  if (!(eigs[eigs.size() - 1] > eigs[0]))
    throw std::invalid_argument("fit_spectrum: all eigenvalues are equal");

  const Vector grid = fit_grid(eigs, opt.grid_cap);
  const std::vector<BasisElement> basis = build_basis(grid);
  const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
  const EmpiricalSpectrumTarget target = empirical_target(eigs, grid);
  const Matrix cm = trapezoid_matrix(grid, opt.cdf_origin);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  FitResult best;
  best.target = target;
  bool have_best = false;
  FitDiagnostics diag;

  auto evaluate = [&](const ComplexVector& m) { return (cm * m.imag() - target.values).cwiseAbs().maxCoeff(); };

  for (int start = 0; start <= opt.restarts; ++start) {
    Vector w0(k);
    if (start == 0) {
      w0.setConstant(1.0 / static_cast<double>(k));
    } else {
      for (Eigen::Index q = 0; q < k; ++q) w0[q] = unif(rng);
      w0 /= w0.sum();
    }
    ++diag.starts;
    SlpState state;
    state.w = w0;
    MpGridSolution sol;
    try {
      sol = solve_grid(SpectralMixture(basis, w0), conc, grid, opt.epsilon);
    } catch (const numerical_error&) {
      continue;
    }
    state.m = sol.m;
    state.objective = evaluate(state.m);
    double rho = opt.rho_initial;
    std::vector<double> history{state.objective};
    const double stall_tol = opt.stall_fraction / static_cast<double>(eigs.size());
    const double stall_level = opt.stall_level / static_cast<double>(eigs.size());
    for (int it = 0; it < opt.max_iter; ++it) {
      state.iteration = it + 1;
      ++diag.iterations;
      IterationRecord rec;
      rec.start = start;
      rec.iteration = it + 1;
      rec.rho = rho;
      detail::StepProposal step;
      try {
        step = detail::propose_step(state, basis, grid, conc, target, cm, rho, opt);
      } catch (const numerical_error&) {
        step.ok = false;
      }
      bool accepted = false;
      double candidate = state.objective;
      if (!step.ok) {
        ++diag.lp_failures;
      } else {
        rec.predicted = step.predicted;
        if (state.objective - step.predicted < opt.improvement_tol * 1e-2) {
          // the linear model sees no descent within any radius
          rec.objective = state.objective;
          rec.candidate = state.objective;
          rec.weight_sum = state.w.sum();
          rec.min_weight = state.w.minCoeff();
          if (opt.record_trace) diag.trace.push_back(rec);
          state.converged = true;
          break;
        }
        const Vector w_new = detail::clean_weights(state.w + step.dw);
        const SpectralMixture mix_new(basis, w_new);
        try {
          int fallbacks = 0;
          MpGridSolution trial =
              refine_grid(mix_new, conc, grid, state.m + step.dm, opt.epsilon, &fallbacks);
          diag.cold_solves += fallbacks;
          candidate = evaluate(trial.m);
          if (candidate < state.objective) {
            accepted = true;
            const double gain = state.objective - candidate;
            state.w = w_new;
            state.m = trial.m;
            state.objective = candidate;
            sol = std::move(trial);
            rho = std::min(opt.rho_max, rho * opt.rho_grow);
            if (gain < opt.improvement_tol && candidate <= stall_level) state.converged = true;
          }
        } catch (const numerical_error&) {
          accepted = false;
        }
      }
      if (!accepted) rho = std::max(opt.rho_min, rho * opt.rho_shrink);
      rec.accepted = accepted;
      rec.candidate = candidate;
      rec.objective = state.objective;
      rec.weight_sum = state.w.sum();
      rec.min_weight = state.w.minCoeff();
      if (opt.record_trace) diag.trace.push_back(rec);
      if (state.converged) break;
      history.push_back(state.objective);
      const auto h = static_cast<int>(history.size());
      if (opt.stall_window > 0 && h > opt.stall_window &&
          history[static_cast<std::size_t>(h - 1 - opt.stall_window)] - state.objective < stall_tol) {
        state.converged = state.objective <= stall_level;
        break;
      }
      if (!accepted && rec.rho <= opt.rho_min && step.ok) {
        // Rejected at the smallest radius. Either the model sees no descent
        // (converged) or it predicts descent the true objective does not
        // deliver, which happens when a support edge crosses a grid point.
        // The latter start is abandoned.
        state.converged = state.objective - step.predicted < opt.improvement_tol;
        break;
      }
    }
    const SpectralMixture mix(basis, state.w);
    const double residual = max_mp_residual(mix, sol);
    if (state.converged && residual > opt.residual_tol) state.converged = false;
    const bool better = !have_best || (state.converged && !best.diagnostics.converged) ||
                        (state.converged == best.diagnostics.converged && state.objective < best.objective);
    if (better) {
      best.mixture = mix;
      best.solution = sol;
      best.objective = state.objective;
      best.diagnostics.converged = state.converged;
      best.diagnostics.residual = residual;
      have_best = true;
    }
    if (state.converged) {
      diag.first_try = start == 0;
      break;
    }
  }
  if (!have_best) throw numerical_error("fit_spectrum: every start failed to solve the forward problem");
  diag.converged = best.diagnostics.converged;
  diag.residual = best.diagnostics.residual;
  diag.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  best.diagnostics = std::move(diag);
  return best;
}

}  // namespace nlshrink
