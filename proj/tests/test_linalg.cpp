#include <random>

#include <gtest/gtest.h>

#include "nlshrink/linalg.hpp"

using namespace nlshrink;

namespace {

Matrix random_symmetric(int p, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = z(rng);
  return 0.5 * (a + a.transpose());
}

double rel_fro(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(SampleCovariance, TwoByOne) {
  Matrix y(2, 1);
  y << 1.0, -1.0;
  const Matrix s = sample_covariance(DataMatrix(y));
  ASSERT_EQ(s.rows(), 1);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
}

TEST(SampleCovariance, IdenticalColumnsGiveRankOne) {
  Matrix y(6, 3);
  for (int i = 0; i < 6; ++i) y.row(i).setConstant(i - 2.5);
  const Matrix s = sample_covariance(DataMatrix(y));
  Eigen::FullPivLU<Matrix> lu(s);
  lu.setThreshold(1e-10);
  EXPECT_EQ(lu.rank(), 1);
}

TEST(SampleCovariance, ConvergesToIdentity) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  Matrix y(10000, 10);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = z(rng);
  const Matrix s = sample_covariance(DataMatrix(y));
  EXPECT_LT(std::sqrt((s - Matrix::Identity(10, 10)).squaredNorm() / 10.0), 0.1);
  EXPECT_LT((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleCovariance, RejectsWideData) {
  Matrix y = Matrix::Ones(3, 3);
  EXPECT_THROW(sample_covariance(DataMatrix(y)), dimension_error);
  try {
    DataMatrix(Matrix::Ones(3, 5)).require_concentration_below_one(2);
  } catch (const dimension_error& e) {
    EXPECT_NE(std::string(e.what()).find("c = p/n must be < 1"), std::string::npos);
  }
}

TEST(SampleCovariance, RejectsNonFinite) {
  Matrix y = Matrix::Ones(4, 2);
  y(1, 1) = std::nan("");
  EXPECT_THROW(DataMatrix{y}, std::invalid_argument);
}

TEST(SampleCovariance, DemeanRemovesColumnMeans) {
  Matrix y(4, 2);
  y << 1, 5, 2, 5, 3, 5, 4, 5;
  const Matrix s = sample_covariance(DataMatrix(y), true);
  EXPECT_NEAR(s(0, 0), 1.25, 1e-14);
  EXPECT_NEAR(s(1, 1), 0.0, 1e-14);
}

TEST(Eigh, Identity) {
  const EigenSystem e = eigh(Matrix::Identity(3, 3));
  EXPECT_TRUE(e.eigenvalues.isApprox(Vector::Ones(3)));
  EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(Eigh, DiagonalIsSortedWithPermutationVectors) {
  Matrix s = Vector(Eigen::Vector3d(3, 1, 2)).asDiagonal();
  const EigenSystem e = eigh(s);
  EXPECT_NEAR(e.eigenvalues[0], 1.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[1], 2.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues[2], 3.0, 1e-14);
  EXPECT_NEAR(std::abs(e.eigenvectors(1, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(e.eigenvectors(2, 1)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 2)), 1.0, 1e-12);
}

TEST(Eigh, ReconstructionOracle) {
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const Matrix s = random_symmetric(5, seed);
    const EigenSystem e = eigh(s);
    for (Eigen::Index i = 1; i < 5; ++i) EXPECT_LE(e.eigenvalues[i - 1], e.eigenvalues[i]);
    EXPECT_LT(rel_fro(reconstruct(e, e.eigenvalues), s), 1e-8);
    EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(),
              1e-10);
  }
}

TEST(Eigh, RejectsAsymmetric) {
  Matrix s(2, 2);
  s << 1, 2, 3, 4;
  EXPECT_THROW(eigh(s), std::invalid_argument);
}

TEST(Reconstruct, OnesGiveIdentity) {
  const EigenSystem e = eigh(random_symmetric(6, 3));
  EXPECT_LT((reconstruct(e, Vector::Ones(6)) - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reconstruct, InverseEigenvaluesGiveInverse) {
  Matrix a = random_symmetric(6, 4);
  const Matrix s = a * a.transpose() + Matrix::Identity(6, 6);
  const EigenSystem e = eigh(s);
  EXPECT_LT(rel_fro(reconstruct(e, e.eigenvalues.cwiseInverse()), s.inverse()), 1e-6);
}

TEST(Reconstruct, EigenvaluesRoundTrip) {
  const EigenSystem e = eigh(random_symmetric(8, 5));
  Vector d(8);
  d << 5, -1, 3, 3, 0.5, 7, 2, 1;
  const Vector back = eigh(reconstruct(e, d)).eigenvalues;
  std::sort(d.data(), d.data() + d.size());
  EXPECT_LT((back - d).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reconstruct, LengthMismatch) {
  const EigenSystem e = eigh(Matrix::Identity(3, 3));
  EXPECT_THROW(reconstruct(e, Vector::Ones(2)), dimension_error);
}
