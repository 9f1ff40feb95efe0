#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "shrinkage.hpp"

namespace nlshrink {

enum class DesignKind { bai_silverstein, beta, custom };
enum class Distribution { normal, student_t };
enum class LossKind { frobenius, james_stein };
enum class Target { covariance, precision };
// What the estimators are compared against: the finite-sample optimal
// S* (or P*) built on the sample eigenvectors, or the population matrix.
enum class Reference { optimal, population };

struct PopulationDesign {
  DesignKind kind = DesignKind::bai_silverstein;
  std::size_t p = 100;
  double dispersion = 9.0;
  double alpha = 1.0, beta = 1.0;
  std::vector<double> eigenvalues;  // custom only
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t replication_seed(std::uint64_t master, std::size_t rep) {
  return splitmix64(splitmix64(master) ^ splitmix64(0xA5A5A5A5ULL + rep));
}

/// Quantile of the Beta(a, b) law by bisection on the regularized
/// incomplete beta function.
inline double beta_quantile(double a, double b, double q) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta parameters must be positive");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("beta quantile level outside [0, 1]");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (boost::math::ibeta(a, b, mid) < q) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline Vector population_eigenvalues(const PopulationDesign& d) {
  if (d.kind == DesignKind::custom) {
    if (d.eigenvalues.empty()) throw std::invalid_argument("custom design has no eigenvalues");
    Vector v = Eigen::Map<const Vector>(d.eigenvalues.data(), static_cast<Eigen::Index>(d.eigenvalues.size()));
    if (!(v.minCoeff() > 0.0) || !v.allFinite())
      throw std::invalid_argument("custom eigenvalues must be positive and finite");
    return v;
  }
  if (d.p < 1) throw std::invalid_argument("design dimension must be positive");
  const auto p = static_cast<Eigen::Index>(d.p);
  Vector v(p);
  if (d.kind == DesignKind::bai_silverstein) {
    if (!(d.dispersion >= 0.0)) throw std::invalid_argument("dispersion must be nonnegative");
    const auto n1 = static_cast<Eigen::Index>(std::lround(0.2 * static_cast<double>(p)));
    const auto n2 = static_cast<Eigen::Index>(std::lround(0.4 * static_cast<double>(p)));
    for (Eigen::Index i = 0; i < p; ++i)
      v[i] = i < n1 ? 1.0 : i < n1 + n2 ? 1.0 + 2.0 * d.dispersion / 9.0 : 1.0 + d.dispersion;
    return v;
  }
  for (Eigen::Index i = 0; i < p; ++i)
    v[i] = 1.0 + 9.0 * beta_quantile(d.alpha, d.beta, (static_cast<double>(i) + 0.5) / static_cast<double>(p));
  return v;
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of R's diagonal folded into Q).
inline Matrix random_rotation(Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Matrix g(p, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < p; ++i) g(i, j) = z(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < p; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

struct NoiseSpec {
  Distribution distribution = Distribution::normal;
  double df = 3.0;
};

/// Y = X Sigma^{1/2} with unit-variance i.i.d. entries in X.
inline DataMatrix sample_data(const Matrix& sigma_sqrt, std::size_t n, const NoiseSpec& noise,
                              std::mt19937_64& rng) {
  const Eigen::Index p = sigma_sqrt.rows();
  Matrix x(static_cast<Eigen::Index>(n), p);
  if (noise.distribution == Distribution::normal) {
    std::normal_distribution<double> z;
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = z(rng);
  } else {
    if (!(noise.df > 2.0)) throw std::invalid_argument("student_t needs df > 2 for unit variance");
    std::student_t_distribution<double> t(noise.df);
    const double scale = 1.0 / std::sqrt(noise.df / (noise.df - 2.0));
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = scale * t(rng);
  }
  return DataMatrix(x * sigma_sqrt);
}

inline DataMatrix sample_data(const Vector& eigenvalues, std::size_t n, const NoiseSpec& noise,
                              std::mt19937_64& rng) {
  return sample_data(Matrix(eigenvalues.cwiseSqrt().asDiagonal()), n, noise, rng);
}

/// ||A - B||^2 with ||M||^2 = tr(M M') / p.
inline double frobenius_loss(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw dimension_error("frobenius_loss: shape mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.rows());
}

inline double james_stein_loss(const Matrix& est, const Matrix& sigma) {
  if (est.rows() != sigma.rows() || est.cols() != sigma.cols())
    throw dimension_error("james_stein_loss: shape mismatch");
  const EigenSystem es = eigh(sigma);
  if (!(es.eigenvalues.minCoeff() > 0.0))
    throw std::invalid_argument("james_stein_loss: Sigma is not positive definite");
  const Matrix w = reconstruct(es, es.eigenvalues.cwiseSqrt().cwiseInverse());
  const Vector mu = eigh(w * est * w).eigenvalues;
  if (!(mu.minCoeff() > 0.0))
    throw std::invalid_argument("james_stein_loss: estimator is not positive definite");
  return (mu.array() - mu.array().log() - 1.0).sum();
}

struct StudyConfig {
  PopulationDesign design;
  std::size_t n = 300;
  NoiseSpec noise;
  std::size_t replications = 100;
  LossKind loss = LossKind::frobenius;
  std::vector<Target> targets{Target::covariance};
  Reference reference = Reference::optimal;
  std::vector<std::string> estimators{"sample", "linear", "nonlinear", "oracle", "optimal"};
  bool rotate = false;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: NLSHRINK_THREADS or hardware concurrency
  std::size_t trace_replications = 0;
  FitOptions fit;

  void validate() const;
};

/// Estimator names available for each target.
inline const std::vector<std::string>& known_estimators(Target t) {
  static const std::vector<std::string> cov{"sample", "linear", "nonlinear", "oracle", "cv", "optimal"};
  static const std::vector<std::string> prec{"sample", "linear", "nonlinear", "nonlinear_inverse",
                                             "oracle", "optimal"};
  return t == Target::covariance ? cov : prec;
}

inline const char* to_string(Target t) { return t == Target::covariance ? "covariance" : "precision"; }

inline void StudyConfig::validate() const {
  if (replications < 1) throw std::invalid_argument("replications must be at least 1");
  if (noise.distribution == Distribution::student_t && !(noise.df > 2.0))
    throw std::invalid_argument("student_t requires df > 2");
  const std::size_t p = design.kind == DesignKind::custom ? design.eigenvalues.size() : design.p;
  if (p < 2 || p >= n) throw dimension_error("need 2 <= p < n, got p = " + std::to_string(p) +
                                             ", n = " + std::to_string(n));
  if (targets.empty()) throw std::invalid_argument("no target requested");
  if (loss == LossKind::james_stein) {
    for (Target t : targets)
      if (t != Target::covariance) throw std::invalid_argument("james_stein loss applies to covariance only");
  }
  for (const auto& e : estimators) {
    bool ok = false;
    for (Target t : targets)
      for (const auto& k : known_estimators(t)) ok = ok || k == e;
    if (!ok) throw std::invalid_argument("unknown estimator '" + e + "'");
  }
  fit.validate();
}

struct EstimatorSummary {
  std::string name;
  double mean_loss = 0.0;
  double loss_se = 0.0;
  double prial = 0.0;
  double prial_se = 0.0;
};

struct TargetReport {
  Target target = Target::covariance;
  std::vector<EstimatorSummary> estimators;
  // per successful replication, in replication order; "sample" included
  std::map<std::string, std::vector<double>> losses;

  const EstimatorSummary& at(const std::string& name) const {
    for (const auto& e : estimators)
      if (e.name == name) return e;
    throw std::out_of_range("estimator '" + name + "' not in report");
  }
};

struct TracePoint {
  std::size_t replication;
  double lambda, d_hat, d_oracle, d_star;
};

struct StudyReport {
  StudyConfig config;
  std::size_t completed = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
  std::size_t fits = 0, fits_converged = 0, fits_first_try = 0;
  std::vector<TargetReport> targets;
  std::vector<TracePoint> trace;
  double seconds = 0.0;

  const TargetReport& at(Target t) const {
    for (const auto& r : targets)
      if (r.target == t) return r;
    throw std::out_of_range(std::string("target '") + to_string(t) + "' not in report");
  }
};

struct PrialDifference {
  double value = 0.0;
  double se = 0.0;
};

namespace detail {

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double covariance(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double mx = mean(x), my = mean(y);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (x[i] - mx) * (y[i] - my);
  return s / static_cast<double>(n - 1);
}

// 100 (1 - E[num] / E[den]) and its delta-method standard error
inline std::pair<double, double> ratio_prial(const std::vector<double>& num, const std::vector<double>& den) {
  const double mn = mean(num), md = mean(den);
  const double r = mn / md;
  const double var = (covariance(num, num) - 2.0 * r * covariance(num, den) + r * r * covariance(den, den)) /
                     (md * md * static_cast<double>(num.size()));
  return {100.0 * (1.0 - r), 100.0 * std::sqrt(std::max(var, 0.0))};
}

inline double standard_error(const std::vector<double>& x) {
  return x.size() < 2 ? 0.0 : std::sqrt(covariance(x, x) / static_cast<double>(x.size()));
}

inline unsigned thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NLSHRINK_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct ReplicationResult {
  bool ok = false;
  std::string error;
  bool fitted = false, converged = false, first_try = false;
  std::vector<std::map<std::string, double>> losses;  // per target
  std::vector<TracePoint> trace;
};

inline bool wants(const StudyConfig& cfg, const std::string& name) {
  for (const auto& e : cfg.estimators)
    if (e == name) return true;
  return false;
}

inline double loss_of(const StudyConfig& cfg, const Matrix& est, const Matrix& reference) {
  return cfg.loss == LossKind::frobenius ? frobenius_loss(est, reference) : james_stein_loss(est, reference);
}

struct Population {
  Vector eigenvalues;
  Matrix sigma, sigma_sqrt, sigma_inv;
  SpectralMixture h;
};

inline ReplicationResult run_replication(const StudyConfig& cfg, const Population& pop, std::size_t rep) {
  ReplicationResult out;
  try {
    const std::uint64_t seed = replication_seed(cfg.seed, rep);
    std::mt19937_64 rng(seed);
    const DataMatrix data = sample_data(pop.sigma_sqrt, cfg.n, cfg.noise, rng);
    const EigenSystem eig = eigh(sample_covariance(data));
    const Vector& lam = eig.eigenvalues;
    const Concentration conc(static_cast<std::size_t>(data.p()), cfg.n);
    const FiniteSampleOptimal fso = finite_sample_optimal(eig, pop.sigma);

    bool need_fit = wants(cfg, "nonlinear") || wants(cfg, "nonlinear_inverse") || rep < cfg.trace_replications;
    bool need_oracle = wants(cfg, "oracle") || rep < cfg.trace_replications;
    ComplexVector m_hat, m_or;
    if (need_fit) {
      FitOptions fo = cfg.fit;
      fo.seed = seed;
      const FitResult fit = fit_spectrum(lam, conc, fo);
      out.fitted = true;
      out.converged = fit.diagnostics.converged;
      out.first_try = fit.diagnostics.first_try;
      m_hat = interpolate_m(fit.solution.grid, fit.solution.m, lam);
    }
    if (need_oracle) m_or = population_m(pop.h, conc, lam);

    const Vector inv_lam = lam.cwiseInverse();
    std::optional<LinearShrinkage> lin;
    if (wants(cfg, "linear")) lin = linear_shrinkage(data);

    for (Target t : cfg.targets) {
      std::map<std::string, double> losses;
      const bool cov = t == Target::covariance;
      const bool population = cfg.reference == Reference::population || cfg.loss == LossKind::james_stein;
      const Matrix& ref = population ? (cov ? pop.sigma : pop.sigma_inv) : (cov ? fso.s_star : fso.p_star);
      auto add = [&](const std::string& name, const Matrix& m) { losses[name] = loss_of(cfg, m, ref); };
      add("sample", reconstruct(eig, cov ? lam : inv_lam));
      for (const auto& name : cfg.estimators) {
        if (name == "sample") continue;
        bool known = false;
        for (const auto& k : known_estimators(t)) known = known || k == name;
        if (!known) continue;
        if (name == "optimal") {
          add(name, cov ? fso.s_star : fso.p_star);
        } else if (name == "linear") {
          const Vector& d = lin->factors.values;
          add(name, reconstruct(eig, cov ? d : Vector(d.cwiseInverse())));
        } else if (name == "nonlinear") {
          add(name, reconstruct(eig, cov ? oracle_cov_factors(lam, conc.c, m_hat).values
                                         : oracle_prec_factors(lam, conc.c, m_hat).values));
        } else if (name == "nonlinear_inverse") {
          add(name, reconstruct(eig, oracle_cov_factors(lam, conc.c, m_hat).values.cwiseInverse()));
        } else if (name == "oracle") {
          add(name, reconstruct(eig, cov ? oracle_cov_factors(lam, conc.c, m_or).values
                                         : oracle_prec_factors(lam, conc.c, m_or).values));
        } else if (name == "cv") {
          add(name, reconstruct(eig, cross_validation_factors(data).values));
        }
      }
      out.losses.push_back(std::move(losses));
    }

    if (rep < cfg.trace_replications) {
      const Vector d_hat = oracle_cov_factors(lam, conc.c, m_hat).values;
      const Vector d_or = oracle_cov_factors(lam, conc.c, m_or).values;
      for (Eigen::Index i = 0; i < lam.size(); ++i)
        out.trace.push_back({rep, lam[i], d_hat[i], d_or[i], fso.d[i]});
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = "replication " + std::to_string(rep) + ": " + e.what();
  }
  return out;
}

}  // namespace detail

/// Difference PRIAL(a) - PRIAL(b) with a paired delta-method standard error.
inline PrialDifference prial_difference(const TargetReport& r, const std::string& a, const std::string& b) {
  const auto& la = r.losses.at(a);
  const auto& lb = r.losses.at(b);
  const auto& l0 = r.losses.at("sample");
  std::vector<double> diff(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) diff[i] = lb[i] - la[i];
  // PRIAL(a) - PRIAL(b) = 100 E[L_b - L_a] / E[L_0] = -(ratio prial of diff) + 100
  const auto [p, se] = detail::ratio_prial(diff, l0);
  return {100.0 - p, se};
}

inline StudyReport run_study(const StudyConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();

  detail::Population pop;
  pop.eigenvalues = population_eigenvalues(cfg.design);
  const Eigen::Index p = pop.eigenvalues.size();
  pop.h = SpectralMixture::empirical(pop.eigenvalues);
  if (cfg.rotate) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x5DEECE66DULL));
    const Matrix q = random_rotation(p, rng);
    pop.sigma = q * pop.eigenvalues.asDiagonal() * q.transpose();
    pop.sigma_sqrt = q * pop.eigenvalues.cwiseSqrt().asDiagonal() * q.transpose();
    pop.sigma_inv = q * pop.eigenvalues.cwiseInverse().asDiagonal() * q.transpose();
  } else {
    pop.sigma = pop.eigenvalues.asDiagonal();
    pop.sigma_sqrt = pop.eigenvalues.cwiseSqrt().asDiagonal();
    pop.sigma_inv = pop.eigenvalues.cwiseInverse().asDiagonal();
  }

  std::vector<detail::ReplicationResult> results(cfg.replications);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < cfg.replications; r = next++) results[r] = detail::run_replication(cfg, pop, r);
  };
  const unsigned nt = std::min<unsigned>(detail::thread_count(cfg.threads),
                                         static_cast<unsigned>(cfg.replications));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  StudyReport rep;
  rep.config = cfg;
  for (Target t : cfg.targets) rep.targets.push_back({t, {}, {}});
  for (const auto& r : results) {
    if (r.fitted) {
      ++rep.fits;
      rep.fits_converged += r.converged;
      rep.fits_first_try += r.first_try;
    }
    if (!r.ok) {
      ++rep.failures;
      rep.failure_messages.push_back(r.error);
      continue;
    }
    ++rep.completed;
    for (std::size_t k = 0; k < cfg.targets.size(); ++k)
      for (const auto& [name, loss] : r.losses[k]) rep.targets[k].losses[name].push_back(loss);
    rep.trace.insert(rep.trace.end(), r.trace.begin(), r.trace.end());
  }
  if (rep.completed == 0) throw numerical_error("every replication failed: " + rep.failure_messages.front());

  for (auto& tr : rep.targets) {
    const auto& l0 = tr.losses.at("sample");
    std::vector<std::string> order{"sample"};
    for (const auto& e : cfg.estimators)
      if (e != "sample" && tr.losses.count(e)) order.push_back(e);
    for (const auto& name : order) {
      const auto& l = tr.losses.at(name);
      EstimatorSummary s;
      s.name = name;
      s.mean_loss = detail::mean(l);
      s.loss_se = detail::standard_error(l);
      std::tie(s.prial, s.prial_se) = detail::ratio_prial(l, l0);
      if (name == "sample") s.prial = 0.0, s.prial_se = 0.0;
      tr.estimators.push_back(s);
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace nlshrink
