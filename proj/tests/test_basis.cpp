#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "nlshrink/basis.hpp"

using namespace nlshrink;

namespace {

// \int t/(t - z) dM(t) by adaptive Gauss-Kronrod over the ramp density.
complex quad_mlg(const BasisElement& e, complex z) {
  using boost::math::quadrature::gauss_kronrod;
  auto re = [&](double t) { return (t / (t - z)).real() * e.density(t); };
  auto im = [&](double t) { return (t / (t - z)).imag() * e.density(t); };
  const double r = gauss_kronrod<double, 61>::integrate(re, e.lo, e.hi, 15, 1e-14);
  const double i = gauss_kronrod<double, 61>::integrate(im, e.lo, e.hi, 15, 1e-14);
  return {r, i};
}

complex quad_stieltjes(const BasisElement& e, complex z) {
  using boost::math::quadrature::gauss_kronrod;
  auto re = [&](double t) { return (1.0 / (t - z)).real() * e.density(t); };
  auto im = [&](double t) { return (1.0 / (t - z)).imag() * e.density(t); };
  return {gauss_kronrod<double, 61>::integrate(re, e.lo, e.hi, 15, 1e-14),
          gauss_kronrod<double, 61>::integrate(im, e.lo, e.hi, 15, 1e-14)};
}

}  // namespace

TEST(BuildGrid, RejectsDegenerate) {
  EXPECT_THROW(build_grid(1.0, 1.0, 5), std::invalid_argument);
  EXPECT_THROW(build_grid(0.0, 1.0, 5), std::invalid_argument);
  EXPECT_THROW(build_grid(-1.0, 1.0, 5), std::invalid_argument);
}

TEST(BuildGrid, PrintedFormula) {
  const Vector g = build_grid(1.0, 3.0, 2, GridEnd::printed);
  ASSERT_EQ(g.size(), 2);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 2.0);
}

TEST(BuildGrid, AppendedEndpointAndConstantSpacing) {
  const Vector g = build_grid(0.5, 7.25, 40);
  ASSERT_EQ(g.size(), 41);
  EXPECT_DOUBLE_EQ(g[0], 0.5);
  EXPECT_DOUBLE_EQ(g[40], 7.25);
  const double h = (7.25 - 0.5) / 40.0;
  for (Eigen::Index i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i] - g[i - 1], h, 1e-12);
}

TEST(BuildBasis, ElementCounts) {
  EXPECT_EQ(build_basis(build_grid(1.0, 3.0, 2, GridEnd::printed)).size(), 4u);
  EXPECT_EQ(build_basis(build_grid(1.0, 3.0, 100, GridEnd::printed)).size(), 298u);
}

TEST(BuildBasis, EveryElementIsCompleteAtLastPoint) {
  const Vector g = build_grid(0.3, 4.0, 12);
  for (const BasisElement& e : build_basis(g)) EXPECT_DOUBLE_EQ(e.cdf(g[g.size() - 1]), 1.0);
}

TEST(BuildBasis, RejectsUnsorted) {
  Vector g(3);
  g << 1.0, 3.0, 2.0;
  EXPECT_THROW(build_basis(g), std::invalid_argument);
}

TEST(ElementMLG, AtomAtI) {
  const complex v = element_mLG(BasisElement::atom(1.0), complex(0.0, 1.0));
  EXPECT_NEAR(v.real(), 0.5, 1e-15);
  EXPECT_NEAR(v.imag(), 0.5, 1e-15);
}

TEST(ElementMLG, RampRealArgumentMatchesQuadrature) {
  const BasisElement up = BasisElement::ramp_up(1.0, 2.0);
  const complex v = element_mLG(up, complex(3.0, 0.0));
  const complex q = quad_mlg(up, complex(3.0, 0.0));
  EXPECT_NEAR(v.real(), q.real(), 1e-8);
  EXPECT_EQ(v.imag(), 0.0);
}

TEST(ElementMLG, OnSupportRejected) {
  EXPECT_THROW(element_mLG(BasisElement::ramp_up(1.0, 2.0), complex(1.5, 0.0)), std::domain_error);
  EXPECT_THROW(element_mLG(BasisElement::atom(2.0), complex(2.0, 0.0)), std::domain_error);
}

TEST(ElementMLG, LargeArgumentDecays) {
  const std::vector<BasisElement> elems = {BasisElement::atom(2.0), BasisElement::ramp_up(1.0, 4.0),
                                           BasisElement::ramp_down(0.5, 3.0)};
  const complex z(0.3, 1e3);
  for (const BasisElement& e : elems) {
    const complex v = element_mLG(e, z);
    EXPECT_LE(std::abs(v), 2.0 * e.mean() / z.imag());
    // -z m_G(z) -> 1
    EXPECT_NEAR(std::abs(-z * e.stieltjes(z).value - 1.0), 0.0, 1e-2);
  }
}

TEST(ElementMLG, RandomPairsMatchQuadrature) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double lo = 0.1 + 5.0 * u(rng);
    const double hi = lo + 0.01 + 3.0 * u(rng);
    const BasisElement e = trial % 2 ? BasisElement::ramp_up(lo, hi) : BasisElement::ramp_down(lo, hi);
    // mix near-support, far-field (series) and real off-support points
    complex z;
    switch (trial % 4) {
      case 0: z = complex(lo + (hi - lo) * u(rng), 0.05 + u(rng)); break;
      case 1: z = complex(hi + 10.0 * (hi - lo) * (1.0 + u(rng)), 0.1 * u(rng)); break;
      case 2: z = complex(hi + 0.5 * u(rng) + 1e-3, 0.0); break;
      default: z = complex(lo * u(rng) * 0.99, 0.0); break;
    }
    const complex v = element_mLG(e, z);
    const complex q = quad_mlg(e, z);
    EXPECT_NEAR(v.real(), q.real(), 1e-8 * std::max(1.0, std::abs(q))) << trial;
    EXPECT_NEAR(v.imag(), q.imag(), 1e-8 * std::max(1.0, std::abs(q))) << trial;
  }
}

TEST(ElementStieltjes, DerivativeMatchesFiniteDifference) {
  const std::vector<BasisElement> elems = {BasisElement::atom(2.0), BasisElement::ramp_up(1.0, 1.5),
                                           BasisElement::ramp_down(1.0, 1.5)};
  for (const BasisElement& e : elems) {
    for (complex z : {complex(1.2, 0.3), complex(5.0, 0.01), complex(0.5, 0.0), complex(40.0, 2.0)}) {
      const double h = 1e-6;
      const complex fd = (e.stieltjes(z + h).value - e.stieltjes(z - h).value) / (2.0 * h);
      const complex d = e.stieltjes(z).derivative;
      EXPECT_LT(std::abs(fd - d), 1e-6 * std::max(1.0, std::abs(d)));
      if (e.kind != ElementKind::atom) {
        EXPECT_LT(std::abs(e.stieltjes(z).value - quad_stieltjes(e, z)), 1e-9);
      }
    }
  }
}

TEST(ElementStieltjes, SeriesAndClosedFormAgreeAtSwitch) {
  for (const BasisElement& e : {BasisElement::ramp_up(2.0, 3.0), BasisElement::ramp_down(2.0, 3.0)}) {
    const complex a(2.0 + 4.0 - 1e-9, 0.0), b(2.0 + 4.0 + 1e-9, 0.0);
    const double slope = std::abs(e.stieltjes(a).derivative);
    EXPECT_LT(std::abs(e.stieltjes(a).value - e.stieltjes(b).value), slope * 2e-9 + 1e-14);
  }
}

TEST(MixtureMLH, SingleAtomEqualsElement) {
  const SpectralMixture mix = SpectralMixture::atoms({2.5}, Vector::Ones(1));
  const complex z(1.0, 0.7);
  EXPECT_EQ(mixture_mLH(mix, z), element_mLG(BasisElement::atom(2.5), z));
}

TEST(MixtureMLH, TwoAtomsLinearity) {
  Vector w(2);
  w << 0.5, 0.5;
  const SpectralMixture mix = SpectralMixture::atoms({1.0, 3.0}, w);
  const complex z(0.0, 1.0);
  const complex expect = 0.5 * (1.0 / (1.0 - z)) + 0.5 * (3.0 / (3.0 - z));
  EXPECT_LT(std::abs(mixture_mLH(mix, z) - expect), 1e-15);
}

TEST(MixtureMLH, RandomMixtureMatchesQuadrature) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vector grid = build_grid(0.5, 4.0, 8);
  const auto basis = build_basis(grid);
  Vector w(static_cast<Eigen::Index>(basis.size()));
  for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = u(rng);
  w /= w.sum();
  const SpectralMixture mix(basis, w);
  for (complex z : {complex(1.0, 0.2), complex(3.3, 1.5), complex(10.0, 0.0), complex(0.2, 0.0)}) {
    complex q = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const BasisElement& e = basis[k];
      q += w[static_cast<Eigen::Index>(k)] *
           (e.kind == ElementKind::atom ? e.lo / (e.lo - z) : quad_mlg(e, z));
    }
    EXPECT_LT(std::abs(mixture_mLH(mix, z) - q), 1e-8);
  }
}

TEST(MixtureMLH, ExactLinearityInWeights) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto basis = build_basis(build_grid(1.0, 5.0, 6));
  const Eigen::Index k = static_cast<Eigen::Index>(basis.size());
  Vector w1(k), w2(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    w1[i] = u(rng);
    w2[i] = u(rng);
  }
  w1 /= w1.sum();
  w2 /= w2.sum();
  const double t = 0.3;
  const complex z(2.2, 0.4);
  const complex lhs = mixture_mLH(SpectralMixture(basis, t * w1 + (1 - t) * w2), z);
  const complex rhs = t * mixture_mLH(SpectralMixture(basis, w1), z) +
                      (1 - t) * mixture_mLH(SpectralMixture(basis, w2), z);
  EXPECT_LT(std::abs(lhs - rhs), 1e-12);
}

TEST(MixtureMLH, StieltjesMapsUpperHalfPlaneToItself) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto basis = build_basis(build_grid(0.2, 6.0, 10));
  for (int trial = 0; trial < 50; ++trial) {
    Vector w(static_cast<Eigen::Index>(basis.size()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = u(rng);
    w /= w.sum();
    const SpectralMixture mix(basis, w);
    const complex z(8.0 * u(rng), 1e-4 + 3.0 * u(rng));
    EXPECT_GE(((mixture_mLH(mix, z) - 1.0) / z).imag(), 0.0);
  }
}

TEST(SpectralMixture, Validation) {
  const auto basis = build_basis(build_grid(1.0, 2.0, 2));
  EXPECT_THROW(SpectralMixture(basis, Vector::Ones(3)), dimension_error);
  Vector w = Vector::Constant(static_cast<Eigen::Index>(basis.size()), 0.5);
  EXPECT_THROW(SpectralMixture(basis, w), std::invalid_argument);
  w = Vector::Zero(static_cast<Eigen::Index>(basis.size()));
  w[0] = 1.2;
  w[1] = -0.2;
  EXPECT_THROW(SpectralMixture(basis, w), std::invalid_argument);
}

TEST(SpectralMixture, SupportMerging) {
  Vector w(3);
  w << 0.2, 0.4, 0.4;
  const auto s = SpectralMixture::atoms({1.0, 3.0, 10.0}, w).support();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].lo, 3.0);
}
