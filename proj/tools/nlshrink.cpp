// nlshrink command-line tool.
//
//   nlshrink estimate   --input data.csv --output cov.csv [--method nonlinear|linear|cv|sample]
//   nlshrink precision  --input data.csv --output prec.csv [--method nonlinear|linear|sample]
//   nlshrink spectrum   --input data.csv --output fit.json
//   nlshrink mp-solve   --spectrum h.json --c 0.333 --output mp.json
//   nlshrink simulate   --config study.json --output report.json [--table t.csv] [--trace tr.csv]
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure or
// non-convergence (outputs are still written and flagged).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "nlshrink/io.hpp"
#include "nlshrink/version.hpp"

using namespace nlshrink;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kNumerical = 3;

struct FitFlags {
  int max_iter = 200;
  int restarts = 10;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;

  FitOptions options() const {
    FitOptions o;
    o.max_iter = max_iter;
    o.restarts = restarts;
    o.seed = seed;
    o.epsilon = epsilon;
    o.validate();
    return o;
  }
  json echo() const {
    return {{"max_iter", max_iter}, {"restarts", restarts}, {"seed", seed}, {"epsilon", epsilon}};
  }
};

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--max-iter", f.max_iter, "SLP iteration cap per start")->check(CLI::PositiveNumber);
  cmd->add_option("--restarts", f.restarts, "random restarts after a failed start")->check(CLI::Range(0, 50));
  cmd->add_option("--seed", f.seed, "seed for restart weights");
  cmd->add_option("--epsilon", f.epsilon, "lower bound on Im m in the LP")->check(CLI::Range(1e-300, 1e-2));
}

json metadata(const std::string& command, std::optional<std::uint64_t> seed, json config) {
  json m{{"tool", "nlshrink"}, {"version", kVersion}, {"command", command}, {"config", std::move(config)}};
  m["seed"] = seed ? json(*seed) : json(nullptr);
  return m;
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string default_meta_path(const std::string& output) {
  std::filesystem::path p(output);
  p.replace_extension(p.extension() == ".json" ? ".meta.json" : ".json");
  return p.string();
}

void require_distinct(const std::string& input, const std::string& output) {
  std::error_code ec;
  if (std::filesystem::exists(output) && std::filesystem::equivalent(input, output, ec))
    throw io_error("output '" + output + "' would overwrite the input");
}

// Centered data still go through S = Y'Y / n.
Matrix load_data(const std::string& path, bool demean) {
  Matrix y = read_matrix(path);
  if (demean) y.rowwise() -= y.colwise().mean();
  return y;
}

// ---- estimate / precision -----------------------------------------------

struct EstimateArgs {
  std::string input, output, meta, method = "nonlinear";
  bool demean = false;
  FitFlags fit;
};

int run_estimate(const EstimateArgs& a, bool precision) {
  const std::string command = precision ? "precision" : "estimate";
  require_distinct(a.input, a.output);
  const DataMatrix data(load_data(a.input, a.demean));
  data.require_concentration_below_one(2);

  json config{{"input", a.input}, {"output", a.output}, {"method", a.method}, {"demean", a.demean}, {"fit", a.fit.echo()},
              {"n", data.n()}, {"p", data.p()}};
  json meta = metadata(command, a.method == "nonlinear" ? std::optional(a.fit.seed) : std::nullopt, config);
  Matrix result;
  bool converged = true;

  if (a.method == "nonlinear") {
    EstimateOptions opt;
    opt.fit = a.fit.options();
    const SpectralEstimate est = estimate_spectrum(data, opt);
    const MatrixEstimate m = precision ? shrink_precision(est) : shrink_covariance(est);
    result = m.matrix;
    converged = m.diagnostics.converged;
    meta["objective"] = m.objective;
    meta["diagnostics"] = to_json(m.diagnostics);
    meta["factors"] = to_json(m.factors.values);
    meta["eigenvalues"] = to_json(est.eig.eigenvalues);
    meta["warnings"] = m.factors.warnings;
    for (const auto& w : m.factors.warnings) std::cerr << "warning: " << w << "\n";
  } else if (a.method == "linear") {
    const LinearShrinkage lin = linear_shrinkage(data);
    const EigenSystem eig = eigh(sample_covariance(data));
    const Vector d = lin.factors.values;
    result = precision ? reconstruct(eig, d.cwiseInverse()) : lin.matrix;
    meta["intensity"] = lin.intensity;
    meta["target_scale"] = lin.target_scale;
    meta["factors"] = to_json(precision ? Vector(d.cwiseInverse()) : d);
  } else if (a.method == "cv") {
    if (precision) throw std::invalid_argument("method 'cv' applies to the covariance matrix only");
    const EigenSystem eig = eigh(sample_covariance(data));
    const ShrinkageFactors f = cross_validation_factors(data);
    result = reconstruct(eig, f.values);
    meta["factors"] = to_json(f.values);
  } else {
    const Matrix s = sample_covariance(data);
    result = precision ? spd_inverse(s) : s;
  }
  meta["converged"] = converged;

  write_matrix(a.output, result);
  write_json(a.meta.empty() ? default_meta_path(a.output) : a.meta, meta);
  if (!converged) {
    std::cerr << "warning: spectrum fit did not converge; output written and flagged\n";
    return kNumerical;
  }
  return kOk;
}

// ---- spectrum -------------------------------------------------------------

struct SpectrumArgs {
  std::string input, output;
  bool eigenvalues = false;
  bool demean = false;
  std::size_t n = 0;
  FitFlags fit;
};

int run_spectrum(const SpectrumArgs& a) {
  require_distinct(a.input, a.output);
  const Matrix raw = a.eigenvalues ? read_matrix(a.input) : load_data(a.input, a.demean);
  Vector eigs;
  std::size_t p = 0, n = 0;
  if (a.eigenvalues) {
    if (raw.cols() != 1 && raw.rows() != 1) throw io_error("eigenvalue file must be a single row or column");
    if (a.n == 0) throw std::invalid_argument("--n is required with --eigenvalues");
    eigs = Eigen::Map<const Vector>(raw.data(), raw.size());
    std::sort(eigs.data(), eigs.data() + eigs.size());
    p = static_cast<std::size_t>(eigs.size());
    n = a.n;
  } else {
    const DataMatrix data(raw);
    data.require_concentration_below_one(2);
    eigs = eigh(sample_covariance(data)).eigenvalues;
    p = static_cast<std::size_t>(data.p());
    n = static_cast<std::size_t>(data.n());
  }
  const Concentration conc(p, n);
  const FitResult fit = fit_spectrum(eigs, conc, a.fit.options());

  json out = mixture_to_json(fit.solution.grid, fit.mixture.weights());
  out["objective"] = fit.objective;
  out["diagnostics"] = to_json(fit.diagnostics);
  out["c"] = conc.c;
  out["m_real"] = to_json(fit.solution.m.real());
  out["m_imag"] = to_json(fit.solution.m.imag());
  out["cdf"] = to_json(cdf_trapezoid(fit.solution));
  out["target"] = to_json(fit.target.values);
  out["converged"] = fit.diagnostics.converged;
  out["metadata"] = metadata("spectrum", a.fit.seed,
                             {{"input", a.input}, {"eigenvalues", a.eigenvalues}, {"n", n}, {"p", p},
                              {"fit", a.fit.echo()}});
  write_json(a.output, out);
  if (!fit.diagnostics.converged) {
    std::cerr << "warning: spectrum fit did not converge; output written and flagged\n";
    return kNumerical;
  }
  return kOk;
}

// ---- mp-solve -------------------------------------------------------------

struct MpArgs {
  std::string spectrum, output, grid_file;
  double c = 0.0;
  std::size_t points = 400;
};

int run_mp_solve(const MpArgs& a) {
  const SpectralMixture h = mixture_from_json(read_json(a.spectrum));
  const Concentration conc(a.c);
  const SupportSet supp = support(h, conc);
  Vector grid;
  if (!a.grid_file.empty()) {
    const Matrix g = read_matrix_csv(a.grid_file);
    grid = Eigen::Map<const Vector>(g.data(), g.size());
    std::sort(grid.data(), grid.data() + grid.size());
  } else {
    const double lo = supp.intervals.front().lo, hi = supp.intervals.back().hi;
    grid = Vector::LinSpaced(static_cast<Eigen::Index>(a.points), lo, hi);
  }
  const MpGridSolution sol = solve_grid(h, conc, grid);
  json intervals = json::array();
  for (const Interval& iv : supp.intervals) intervals.push_back({iv.lo, iv.hi});
  json out{{"c", conc.c},
           {"support", intervals},
           {"grid", to_json(sol.grid)},
           {"m_real", to_json(sol.m.real())},
           {"m_imag", to_json(sol.m.imag())},
           {"density", to_json(sol.density())},
           {"cdf", to_json(cdf_trapezoid(sol))},
           {"max_residual", max_mp_residual(h, sol)},
           {"metadata", metadata("mp-solve", std::nullopt,
                                 {{"spectrum", a.spectrum}, {"c", a.c}, {"points", a.points},
                                  {"grid_file", a.grid_file}})}};
  write_json(a.output, out);
  return kOk;
}

// ---- simulate -------------------------------------------------------------

struct SimArgs {
  std::string config, output, table, trace;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool timing = false;
  bool ci = false;
};

int run_simulate(const SimArgs& a) {
  if (a.ci && !a.seed) throw std::invalid_argument("--seed is mandatory with --ci");
  StudyConfig cfg = study_config_from_json(read_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.threads = a.threads;
  if (!a.trace.empty() && cfg.trace_replications == 0) cfg.trace_replications = 1;
  const StudyReport rep = run_study(cfg);
  json out = to_json(rep, a.timing);
  out["metadata"] = metadata("simulate", cfg.seed, {{"config", a.config}});
  write_json(a.output, out);
  if (!a.table.empty()) write_text(a.table, study_table_csv(rep));
  if (!a.trace.empty()) write_text(a.trace, trace_csv(rep));
  for (const auto& t : rep.targets) {
    std::cout << to_string(t.target) << "\n";
    for (const auto& e : t.estimators)
      std::cout << "  " << e.name << ": PRIAL " << e.prial << " (se " << e.prial_se << "), mean loss "
                << e.mean_loss << "\n";
  }
  if (rep.failures > 0) {
    std::cerr << rep.failures << " replication(s) failed\n";
    return kNumerical;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear shrinkage of covariance and precision matrices"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  EstimateArgs est, prec;
  for (auto [name, args, help] : {std::tuple{"estimate", &est, "covariance matrix estimate"},
                                  std::tuple{"precision", &prec, "precision matrix estimate"}}) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("-i,--input", args->input, "data CSV (or .json container), one observation per row")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("-o,--output", args->output, "estimated matrix, CSV or .json")->required();
    cmd->add_option("--metadata", args->meta, "metadata JSON (default: output with .json, or .meta.json, extension)");
    cmd->add_option("-m,--method", args->method, "estimator")
        ->check(CLI::IsMember({"nonlinear", "linear", "cv", "sample"}));
    cmd->add_flag("--demean", args->demean, "center the columns before estimating");
    add_fit_flags(cmd, args->fit);
  }

  SpectrumArgs spec;
  auto* cmd_spec = app.add_subcommand("spectrum", "fit the population spectral distribution");
  cmd_spec->add_option("-i,--input", spec.input, "data CSV, or eigenvalues with --eigenvalues")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_spec->add_option("-o,--output", spec.output, "fit JSON")->required();
  cmd_spec->add_flag("--eigenvalues", spec.eigenvalues, "input holds sample eigenvalues");
  cmd_spec->add_option("--n", spec.n, "sample size (with --eigenvalues)");
  cmd_spec->add_flag("--demean", spec.demean, "center the columns before estimating");
  add_fit_flags(cmd_spec, spec.fit);

  MpArgs mp;
  auto* cmd_mp = app.add_subcommand("mp-solve", "solve the forward Marchenko-Pastur equation");
  cmd_mp->add_option("-s,--spectrum", mp.spectrum, "population spectrum JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd_mp->add_option("-c,--c", mp.c, "concentration p/n in (0, 1)")->required();
  cmd_mp->add_option("-o,--output", mp.output, "solution JSON")->required();
  cmd_mp->add_option("--points", mp.points, "grid points spanning the support")->check(CLI::Range(2, 100000));
  cmd_mp->add_option("--grid", mp.grid_file, "grid CSV instead of --points")->check(CLI::ExistingFile);

  SimArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "run a Monte Carlo study");
  cmd_sim->add_option("--config", sim.config, "study JSON")->required()->check(CLI::ExistingFile);
  cmd_sim->add_option("-o,--output", sim.output, "report JSON")->required();
  cmd_sim->add_option("--table", sim.table, "PRIAL table CSV");
  cmd_sim->add_option("--trace", sim.trace, "per-replication (lambda, d) CSV");
  cmd_sim->add_option("--seed", sim.seed, "master seed (overrides the config)");
  cmd_sim->add_option("--threads", sim.threads, "worker threads (default: NLSHRINK_THREADS or all cores)");
  cmd_sim->add_flag("--timing", sim.timing, "include wall-clock seconds in the report");
  cmd_sim->add_flag("--ci", sim.ci, "CI mode: --seed is required");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (app.got_subcommand("estimate")) return run_estimate(est, false);
    if (app.got_subcommand("precision")) return run_estimate(prec, true);
    if (app.got_subcommand("spectrum")) return run_spectrum(spec);
    if (app.got_subcommand("mp-solve")) return run_mp_solve(mp);
    if (app.got_subcommand("simulate")) return run_simulate(sim);
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}
