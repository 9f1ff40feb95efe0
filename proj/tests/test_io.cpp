#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "nlshrink/io.hpp"

using namespace nlshrink;

TEST(FormatDouble, RoundTripsExactly) {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::numeric_limits<double>::denorm_min()}) {
    double back = 0.0;
    ASSERT_TRUE(parse_double(format_double(x), back));
    EXPECT_EQ(back, x);
  }
}

TEST(ParseDouble, AcceptsPaddingRejectsJunk) {
  double v = 0.0;
  EXPECT_TRUE(parse_double("  +4.5 \r", v));
  EXPECT_EQ(v, 4.5);
  EXPECT_FALSE(parse_double("", v));
  EXPECT_FALSE(parse_double("1.5x", v));
  EXPECT_FALSE(parse_double("abc", v));
}

TEST(MatrixCsv, RoundTrip) {
  Matrix m(3, 2);
  m << 1.0, -2.0, 1e-17, 3.25, 0.1, 7.0 / 9.0;
  std::stringstream ss;
  write_matrix_csv(ss, m);
  const Matrix back = read_matrix_csv(ss);
  EXPECT_TRUE((back.array() == m.array()).all());
}

TEST(MatrixCsv, HeaderAndBlankLines) {
  std::stringstream ss("a,b\n1,2\n\n3,4\r\n");
  const Matrix m = read_matrix_csv(ss);
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 1), 4.0);
}

TEST(MatrixCsv, Errors) {
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_matrix_csv(ragged), io_error);
  std::stringstream bad("1,2\n3,x\n");
  EXPECT_THROW(read_matrix_csv(bad), io_error);
  std::stringstream empty("");
  EXPECT_THROW(read_matrix_csv(empty), io_error);
  EXPECT_THROW(read_matrix_csv(std::string("/nonexistent/file.csv")), io_error);
}

TEST(MixtureJson, AtomsEigenvaluesAndGrid) {
  const SpectralMixture a = mixture_from_json(json::parse(R"({"atoms":[1,3],"weights":[0.25,0.75]})"));
  EXPECT_NEAR(a.mean(), 2.5, 1e-14);
  const SpectralMixture e = mixture_from_json(json::parse(R"({"eigenvalues":[1,2,3,6]})"));
  EXPECT_NEAR(e.mean(), 3.0, 1e-14);

  const Vector grid = Vector::LinSpaced(5, 1.0, 3.0);
  const std::vector<BasisElement> basis = build_basis(grid);
  Vector w = Vector::Constant(static_cast<Eigen::Index>(basis.size()), 1.0 / static_cast<double>(basis.size()));
  const SpectralMixture g = mixture_from_json(mixture_to_json(grid, w));
  EXPECT_EQ(g.weights().size(), w.size());
  EXPECT_NEAR(g.mean(), SpectralMixture(basis, w).mean(), 1e-14);
}

TEST(MixtureJson, Rejects) {
  EXPECT_THROW(mixture_from_json(json::parse(R"([1,2])")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"atoms":[1,2],"weights":[0.5,0.6]})")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"atoms":[1],"weights":[0.5,0.5]})")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"atoms":[0,1],"weights":[0.5,0.5]})")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"eigenvalues":[1,-1]})")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"grid":[1,2,3],"weights":[1]})")), io_error);
  EXPECT_THROW(mixture_from_json(json::parse(R"({"weights":[1]})")), io_error);
}

TEST(StudyConfigJson, ParsesAndRoundTrips) {
  const json j = json::parse(R"({
    "design": {"kind": "beta", "p": 50, "alpha": 2, "beta": 5},
    "n": 150, "replications": 7, "distribution": "student_t", "df": 4,
    "targets": ["covariance", "precision"], "reference": "population",
    "estimators": ["sample", "nonlinear"], "rotate": true, "seed": 99,
    "fit": {"max_iter": 300, "restarts": 2}
  })");
  const StudyConfig c = study_config_from_json(j);
  EXPECT_EQ(c.design.kind, DesignKind::beta);
  EXPECT_EQ(c.design.p, 50u);
  EXPECT_EQ(c.n, 150u);
  EXPECT_EQ(c.noise.distribution, Distribution::student_t);
  EXPECT_EQ(c.noise.df, 4.0);
  EXPECT_EQ(c.targets.size(), 2u);
  EXPECT_EQ(c.reference, Reference::population);
  EXPECT_TRUE(c.rotate);
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.fit.max_iter, 300);
  EXPECT_EQ(c.fit.restarts, 2);

  const StudyConfig d = study_config_from_json(to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
}

TEST(StudyConfigJson, Defaults) {
  const StudyConfig c = study_config_from_json(json::parse(R"({"design":{"p":10},"n":40})"));
  EXPECT_EQ(c.design.kind, DesignKind::bai_silverstein);
  EXPECT_EQ(c.design.dispersion, 9.0);
  EXPECT_EQ(c.loss, LossKind::frobenius);
  EXPECT_EQ(c.targets, std::vector<Target>{Target::covariance});
}

TEST(StudyConfigJson, Rejects) {
  EXPECT_THROW(study_config_from_json(json::parse(R"({"n":40})")), io_error);
  EXPECT_THROW(study_config_from_json(json::parse(R"({"design":{"kind":"wishart","p":3},"n":9})")), io_error);
  EXPECT_THROW(study_config_from_json(json::parse(R"({"design":{"p":3},"n":9,"loss":"stein"})")), io_error);
  EXPECT_THROW(study_config_from_json(json::parse(R"({"design":{"p":3},"n":"nine"})")), io_error);
}

TEST(StudyReportOutput, TablesAndTiming) {
  StudyConfig c;
  c.design.p = 10;
  c.n = 40;
  c.replications = 3;
  c.estimators = {"sample", "linear", "optimal"};
  c.trace_replications = 1;
  c.threads = 1;
  const StudyReport r = run_study(c);
  const json j = to_json(r);
  EXPECT_FALSE(j.contains("seconds"));
  EXPECT_TRUE(to_json(r, true).contains("seconds"));
  EXPECT_EQ(j.at("completed"), 3);
  const std::string table = study_table_csv(r);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);
  EXPECT_NE(table.find("covariance,optimal,0,0,100,0"), std::string::npos);
  const std::string trace = trace_csv(r);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 11);
}

TEST(MatrixJson, RoundTripAndDispatch) {
  Matrix m(2, 3);
  m << 1.5, -2, 0.1, 4, 5e-300, 6;
  const Matrix back = matrix_from_json(matrix_to_json(m));
  EXPECT_TRUE((back.array() == m.array()).all());
  const std::string path = (std::filesystem::temp_directory_path() / "nlshrink_io_matrix.json").string();
  write_matrix(path, m);
  EXPECT_TRUE((read_matrix(path).array() == m.array()).all());
  std::filesystem::remove(path);
}

TEST(MatrixJson, Rejects) {
  EXPECT_THROW(matrix_from_json(json::parse(R"({"n":1,"p":2})")), io_error);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"data":[[1,2],[3]]})")), io_error);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"n":3,"p":2,"data":[[1,2],[3,4]]})")), io_error);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"data":[[1,"x"]]})")), io_error);
  EXPECT_THROW(matrix_from_json(json::parse(R"({"data":[]})")), io_error);
}
