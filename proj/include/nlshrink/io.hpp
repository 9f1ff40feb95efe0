// File formats: matrices as CSV, spectra and reports as JSON.
#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mc_harness.hpp"

namespace nlshrink {

using json = nlohmann::json;

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw io_error("cannot format number");
  return std::string(buf, end);
}

inline bool parse_double(const std::string& field, double& out) {
  std::size_t b = field.find_first_not_of(" \t\r");
  std::size_t e = field.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  const char* first = field.data() + b;
  if (*first == '+') ++first;
  const char* last = field.data() + e + 1;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Reads a numeric CSV. A first line that does not parse as numbers is
/// treated as a header and skipped.
inline Matrix read_matrix_csv(std::istream& in, const std::string& name = "input") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> row(cells.size());
    bool ok = true;
    for (std::size_t j = 0; j < cells.size() && ok; ++j) ok = parse_double(cells[j], row[j]);
    if (!ok) {
      if (rows.empty() && lineno == 1) continue;
      throw io_error(name + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error(name + ":" + std::to_string(lineno) + ": expected " +
                     std::to_string(rows.front().size()) + " fields, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error(name + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  return read_matrix_csv(in, path);
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw io_error("write to '" + path + "' failed");
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ostringstream ss;
  write_matrix_csv(ss, m);
  write_text(path, ss.str());
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw io_error(path + ": " + e.what());
  }
}

// JSON matrix container {"n": rows, "p": cols, "data": [[...], ...]}.
inline Matrix matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("data") || !j.at("data").is_array())
    throw io_error("matrix JSON needs a 'data' array of rows");
  const json& d = j.at("data");
  const std::size_t rows = d.size();
  const std::size_t cols = rows ? d[0].size() : 0;
  if (rows == 0 || cols == 0) throw io_error("matrix JSON holds no data");
  if (j.contains("n") && j.at("n") != rows) throw io_error("matrix JSON: 'n' does not match the rows");
  if (j.contains("p") && j.at("p") != cols) throw io_error("matrix JSON: 'p' does not match the columns");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!d[i].is_array() || d[i].size() != cols)
      throw io_error("matrix JSON: row " + std::to_string(i) + " has the wrong length");
    for (std::size_t k = 0; k < cols; ++k) {
      if (!d[i][k].is_number()) throw io_error("matrix JSON: non-numeric entry in row " + std::to_string(i));
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = d[i][k].get<double>();
    }
  }
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    data.push_back(std::move(row));
  }
  return json{{"n", m.rows()}, {"p", m.cols()}, {"data", std::move(data)}};
}

inline bool has_json_extension(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

/// CSV, or the JSON container when the path ends in ".json".
inline Matrix read_matrix(const std::string& path) {
  return has_json_extension(path) ? matrix_from_json(read_json(path)) : read_matrix_csv(path);
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  if (has_json_extension(path))
    write_text(path, matrix_to_json(m).dump() + "\n");
  else
    write_matrix_csv(path, m);
}

inline json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw io_error(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw io_error(what + "[" + std::to_string(i) + "] is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

// Spectrum files take one of three shapes:
//   {"atoms": [...], "weights": [...]}   discrete distribution
//   {"eigenvalues": [...]}               equal-weight atoms
//   {"grid": [...], "weights": [...]}    fitted mixture over the grid basis
inline SpectralMixture mixture_from_json(const json& j) {
  if (!j.is_object()) throw io_error("spectrum must be a JSON object");
  if (j.contains("eigenvalues")) {
    const Vector e = vector_from_json(j.at("eigenvalues"), "eigenvalues");
    if (e.size() == 0 || !(e.minCoeff() > 0.0)) throw io_error("eigenvalues must be positive");
    return SpectralMixture::empirical(e);
  }
  if (!j.contains("weights")) throw io_error("spectrum needs 'weights'");
  const Vector w = vector_from_json(j.at("weights"), "weights");
  if (w.size() == 0 || w.minCoeff() < 0.0 || std::abs(w.sum() - 1.0) > 1e-8)
    throw io_error("weights must be nonnegative and sum to 1");
  if (j.contains("atoms")) {
    const Vector a = vector_from_json(j.at("atoms"), "atoms");
    if (a.size() != w.size()) throw io_error("atoms and weights differ in length");
    if (!(a.minCoeff() > 0.0)) throw io_error("atoms must be positive");
    return SpectralMixture::atoms(std::vector<double>(a.data(), a.data() + a.size()), w);
  }
  if (j.contains("grid")) {
    const Vector g = vector_from_json(j.at("grid"), "grid");
    const std::vector<BasisElement> basis = build_basis(g);
    if (static_cast<Eigen::Index>(basis.size()) != w.size())
      throw io_error("grid of " + std::to_string(g.size()) + " points needs " +
                     std::to_string(basis.size()) + " weights");
    return SpectralMixture(basis, w);
  }
  throw io_error("spectrum needs 'atoms', 'eigenvalues' or 'grid'");
}

inline json mixture_to_json(const Vector& grid, const Vector& weights) {
  return json{{"grid", to_json(grid)}, {"weights", to_json(weights)}};
}

inline json to_json(const FitDiagnostics& d) {
  return json{{"iterations", d.iterations}, {"starts", d.starts},        {"converged", d.converged},
              {"first_try", d.first_try},   {"residual", d.residual},    {"cold_solves", d.cold_solves},
              {"lp_failures", d.lp_failures}};
}

// ---- study configuration -------------------------------------------------

inline const char* to_string(DesignKind k) {
  switch (k) {
    case DesignKind::bai_silverstein: return "bai_silverstein";
    case DesignKind::beta: return "beta";
    case DesignKind::custom: return "custom";
  }
  return "?";
}

inline StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  try {
    const json& d = j.at("design");
    const std::string kind = d.value("kind", "bai_silverstein");
    if (kind == "bai_silverstein") {
      c.design.kind = DesignKind::bai_silverstein;
      c.design.dispersion = d.value("dispersion", 9.0);
    } else if (kind == "beta") {
      c.design.kind = DesignKind::beta;
      c.design.alpha = d.at("alpha").get<double>();
      c.design.beta = d.at("beta").get<double>();
    } else if (kind == "custom") {
      c.design.kind = DesignKind::custom;
      c.design.eigenvalues = d.at("eigenvalues").get<std::vector<double>>();
    } else {
      throw io_error("unknown design kind '" + kind + "'");
    }
    c.design.p = c.design.kind == DesignKind::custom ? c.design.eigenvalues.size() : d.at("p").get<std::size_t>();
    c.n = j.at("n").get<std::size_t>();
    c.replications = j.value("replications", c.replications);
    const std::string dist = j.value("distribution", "normal");
    if (dist == "normal") c.noise.distribution = Distribution::normal;
    else if (dist == "student_t") c.noise.distribution = Distribution::student_t;
    else throw io_error("unknown distribution '" + dist + "'");
    c.noise.df = j.value("df", c.noise.df);
    const std::string loss = j.value("loss", "frobenius");
    if (loss == "frobenius") c.loss = LossKind::frobenius;
    else if (loss == "james_stein") c.loss = LossKind::james_stein;
    else throw io_error("unknown loss '" + loss + "'");
    if (j.contains("targets")) {
      c.targets.clear();
      for (const auto& t : j.at("targets")) {
        const auto s = t.get<std::string>();
        if (s == "covariance") c.targets.push_back(Target::covariance);
        else if (s == "precision") c.targets.push_back(Target::precision);
        else throw io_error("unknown target '" + s + "'");
      }
    }
    const std::string ref = j.value("reference", "optimal");
    if (ref == "optimal") c.reference = Reference::optimal;
    else if (ref == "population") c.reference = Reference::population;
    else throw io_error("unknown reference '" + ref + "'");
    if (j.contains("estimators")) c.estimators = j.at("estimators").get<std::vector<std::string>>();
    c.rotate = j.value("rotate", false);
    c.seed = j.value("seed", std::uint64_t{0});
    c.trace_replications = j.value("trace_replications", std::size_t{0});
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      c.fit.max_iter = f.value("max_iter", c.fit.max_iter);
      c.fit.restarts = f.value("restarts", c.fit.restarts);
      c.fit.epsilon = f.value("epsilon", c.fit.epsilon);
    }
  } catch (const json::exception& e) {
    throw io_error(std::string("study config: ") + e.what());
  }
  return c;
}

inline json to_json(const StudyConfig& c) {
  json design{{"kind", to_string(c.design.kind)}, {"p", c.design.p}};
  if (c.design.kind == DesignKind::bai_silverstein) design["dispersion"] = c.design.dispersion;
  if (c.design.kind == DesignKind::beta) design["alpha"] = c.design.alpha, design["beta"] = c.design.beta;
  if (c.design.kind == DesignKind::custom) design["eigenvalues"] = c.design.eigenvalues;
  json targets = json::array();
  for (Target t : c.targets) targets.push_back(to_string(t));
  json j{{"design", design},
         {"n", c.n},
         {"replications", c.replications},
         {"distribution", c.noise.distribution == Distribution::normal ? "normal" : "student_t"},
         {"loss", c.loss == LossKind::frobenius ? "frobenius" : "james_stein"},
         {"targets", targets},
         {"reference", c.reference == Reference::optimal ? "optimal" : "population"},
         {"estimators", c.estimators},
         {"rotate", c.rotate},
         {"seed", c.seed},
         {"trace_replications", c.trace_replications},
         {"fit", {{"max_iter", c.fit.max_iter}, {"restarts", c.fit.restarts}, {"epsilon", c.fit.epsilon}}}};
  if (c.noise.distribution == Distribution::student_t) j["df"] = c.noise.df;
  return j;
}

inline json to_json(const StudyReport& r, bool timing = false) {
  json targets = json::array();
  for (const auto& t : r.targets) {
    json est = json::array();
    for (const auto& e : t.estimators)
      est.push_back({{"name", e.name},
                     {"mean_loss", e.mean_loss},
                     {"loss_se", e.loss_se},
                     {"prial", e.prial},
                     {"prial_se", e.prial_se}});
    targets.push_back({{"target", to_string(t.target)}, {"estimators", est}});
  }
  json j{{"config", to_json(r.config)},
         {"completed", r.completed},
         {"failures", r.failures},
         {"failure_messages", r.failure_messages},
         {"fits", {{"total", r.fits}, {"converged", r.fits_converged}, {"first_try", r.fits_first_try}}},
         {"results", targets}};
  if (timing) j["seconds"] = r.seconds;
  return j;
}

inline std::string study_table_csv(const StudyReport& r) {
  std::ostringstream ss;
  ss << "target,estimator,mean_loss,loss_se,prial,prial_se\n";
  for (const auto& t : r.targets)
    for (const auto& e : t.estimators)
      ss << to_string(t.target) << ',' << e.name << ',' << format_double(e.mean_loss) << ','
         << format_double(e.loss_se) << ',' << format_double(e.prial) << ',' << format_double(e.prial_se)
         << '\n';
  return ss.str();
}

inline std::string trace_csv(const StudyReport& r) {
  std::ostringstream ss;
  ss << "replication,lambda,d_hat,d_oracle,d_star\n";
  for (const auto& t : r.trace)
    ss << t.replication << ',' << format_double(t.lambda) << ',' << format_double(t.d_hat) << ','
       << format_double(t.d_oracle) << ',' << format_double(t.d_star) << '\n';
  return ss.str();
}

}  // namespace nlshrink
