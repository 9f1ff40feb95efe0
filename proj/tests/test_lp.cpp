#include <random>

#include <gtest/gtest.h>

#include "nlshrink/lp.hpp"
#include "lp_oracle.hpp"

using namespace nlshrink;
using namespace nlshrink::oracle;

TEST(LpSolve, SingleVariableLowerBoundRow) {
  LinearProgram lp(1, 1);
  lp.cost << 1.0;
  lp.a << 1.0;
  lp.sense[0] = RowSense::ge;
  lp.rhs << 1.0;
  lp.lower << -inf;
  const LpResult r = lp_solve(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x[0], 1.0, 1e-12);
}

TEST(LpSolve, VertexEnumerationOracle) {
  std::mt19937_64 rng(2024);
  int feasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const LinearProgram base = random_lp(rng);
    const double oracle = vertex_enumeration(base);
    for (const LinearProgram& lp : {base, bounds_as_rows(base, rng)}) {
      const LpResult r = lp_solve(lp);
      if (!std::isfinite(oracle)) {
        EXPECT_EQ(r.status, LpStatus::infeasible) << trial;
        continue;
      }
      ASSERT_EQ(r.status, LpStatus::optimal) << trial;
      EXPECT_NEAR(r.objective, oracle, 1e-9) << trial;
      EXPECT_LE(r.violation, 1e-9) << trial;
    }
    if (std::isfinite(oracle)) ++feasible;
  }
  EXPECT_GT(feasible, 100);
}

TEST(LpSolve, DegenerateRedundantRowsTerminate) {
  // many copies of the same constraint through the optimum vertex
  LinearProgram lp(6, 2);
  lp.cost << -1.0, -1.0;
  for (int i = 0; i < 6; ++i) {
    lp.a.row(i) << 1.0, 1.0;
    lp.rhs[i] = 1.0;
  }
  lp.a.row(5) << 2.0, 2.0;
  lp.rhs[5] = 2.0;
  lp.sense[4] = RowSense::eq;
  const LpResult r = lp_solve(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, -1.0, 1e-12);
  const LpResult b = lp_solve(lp, {.bland_only = true});
  ASSERT_EQ(b.status, LpStatus::optimal);
  EXPECT_NEAR(b.objective, -1.0, 1e-12);
}

TEST(LpSolve, BealeCyclingExample) {
  // classical cycling instance for the largest-coefficient rule
  LinearProgram lp(3, 4);
  lp.cost << -0.75, 150.0, -0.02, 6.0;
  lp.a << 0.25, -60.0, -0.04, 9.0,
          0.5, -90.0, -0.02, 3.0,
          0.0, 0.0, 1.0, 0.0;
  lp.rhs << 0.0, 0.0, 1.0;
  const LpResult r = lp_solve(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, -0.05, 1e-12);
}

TEST(LpSolve, Unbounded) {
  LinearProgram lp(1, 2);
  lp.cost << -1.0, 0.0;
  lp.a << 1.0, -1.0;
  lp.rhs << 1.0;
  EXPECT_EQ(lp_solve(lp).status, LpStatus::unbounded);
}

TEST(LpSolve, ZeroWidthBoxReturnsAnchor) {
  LinearProgram lp(1, 3);
  lp.cost << 1.0, -2.0, 3.0;
  lp.a << 1.0, 1.0, 1.0;
  lp.sense[0] = RowSense::eq;
  lp.rhs << 0.0;
  lp.lower.setZero();
  lp.upper.setZero();
  const LpResult r = lp_solve(lp);
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_EQ(r.x.cwiseAbs().maxCoeff(), 0.0);
}
