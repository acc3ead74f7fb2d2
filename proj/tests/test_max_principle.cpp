#include <gtest/gtest.h>

#include <cmath>

#include "ricci/flow.hpp"
#include "ricci/max_principle.hpp"

using namespace ricci::maxp;

TEST(Comparison, SolvesLogisticOde) {
  for (double r : {-1.0, 0.0, 0.5, 2.0}) {
    for (double c0 : {-0.5, 0.2, 1.0, 3.0}) {
      const auto phi = logistic_comparison(r, c0);
      EXPECT_NEAR(phi(0.0), c0, 1e-14);
      for (double t : {0.01, 0.05, 0.1}) {
        if (!phi.defined_at(t + 1e-4)) continue;
        const double h = 1e-5;
        const double fd = (phi(t + h) - phi(t - h)) / (2 * h);
        EXPECT_NEAR(fd, phi.rate(phi(t)), 1e-6 * std::max(1.0, std::abs(fd))) << "r=" << r << " c0=" << c0;
      }
    }
  }
}

TEST(Comparison, BlowUpTimes) {
  EXPECT_NEAR(*logistic_comparison(0.0, 2.0).blow_up_time, 0.5, 1e-15);
  EXPECT_FALSE(logistic_comparison(0.0, -1.0).blow_up_time);
  // c0 > r > 0: blow-up at log(c0 / (c0 - r)) / r.
  EXPECT_NEAR(*logistic_comparison(1.0, 2.0).blow_up_time, std::log(2.0), 1e-15);
  EXPECT_FALSE(logistic_comparison(1.0, 0.5).blow_up_time);
  EXPECT_FALSE(logistic_comparison(2.0, 2.0).blow_up_time);
}

TEST(ScalarBound, FlagsSyntheticViolations) {
  const auto phi = logistic_comparison(0.0, 0.0);  // phi = 0
  const std::vector<double> t{0, 1, 2, 3};
  EXPECT_TRUE(verify_scalar_bound(t, {0, 0.1, 0.2, 0.3}, phi, BoundDirection::Lower).pass);
  const auto bad = verify_scalar_bound(t, {0, 0.1, -0.2, 0.3}, phi, BoundDirection::Lower);
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.violations, 1);
  EXPECT_NEAR(bad.worst_violation, -0.2, 1e-15);
  EXPECT_EQ(verify_scalar_bound(t, {0, 0.1, -0.2, 0.3}, phi, BoundDirection::Upper).violations, 2);
}

TEST(ScalarBound, StopsAtBlowUp) {
  const auto phi = logistic_comparison(0.0, 1.0);  // blows up at t = 1
  const auto rep = verify_scalar_bound({0, 0.5, 1.0, 1.5}, {1, 1.5, 2, 2.5}, phi, BoundDirection::Upper);
  EXPECT_TRUE(rep.truncated);
  EXPECT_EQ(rep.samples_checked, 2u);
  EXPECT_TRUE(rep.pass);
}

TEST(EigenAlgebra, HandComputedTriple) {
  // (2, 1, 0): R = 3, S = 5, T = 9, C = 3, P = 25 + 3 (3 - 9) = 7.
  const auto inv = eigen_invariants(EigenTriple::make(0, 2, 1));
  EXPECT_DOUBLE_EQ(inv.R, 3);
  EXPECT_DOUBLE_EQ(inv.S, 5);
  EXPECT_DOUBLE_EQ(inv.T, 9);
  EXPECT_DOUBLE_EQ(inv.C, 3);
  EXPECT_DOUBLE_EQ(inv.P, 7);
  EXPECT_DOUBLE_EQ(p_factored(2, 1, 0), 7);
  EXPECT_DOUBLE_EQ(trace_free_norm_sq(2, 1, 0), 5 - 3);
}

TEST(EigenAlgebra, MakeSortsDescending) {
  const auto e = EigenTriple::make(-1, 5, 2);
  EXPECT_EQ(e.lam, 5);
  EXPECT_EQ(e.mu, 2);
  EXPECT_EQ(e.nu, -1);
}

TEST(EigenAlgebra, IdentityOnUniformSamples) {
  const auto rep = p_identity_check(uniform_triples(20000, 10.0, 1));
  EXPECT_EQ(rep.samples, 20000u);
  EXPECT_EQ(rep.violations, 0u);
}

TEST(EigenAlgebra, LowerBoundOnPinchedSamples) {
  for (double eps : {0.05, 0.1, 0.3}) {
    const auto samples = pinched_triples(20000, eps, 2);
    for (const auto& e : samples) {
      const double R = e.lam + e.mu + e.nu;
      ASSERT_GT(R, 0);
      ASSERT_GE(e.nu, eps * R * (1 - 1e-12));
    }
    const auto rep = p_lower_bound_check(samples, eps);
    EXPECT_EQ(rep.violations, 0u) << eps;
    EXPECT_EQ(rep.rejected, 0u);
  }
}

TEST(EigenAlgebra, LowerBoundFailsForUnpinchedTriple) {
  // nu = 0 violates the hypothesis and is rejected rather than counted.
  const auto rep = p_lower_bound_check({EigenTriple::make(2, 1, 0)}, 0.1);
  EXPECT_EQ(rep.rejected, 1u);
}

TEST(EigenAlgebra, NullVectorCondition) {
  for (double eps : {0.05, 0.2, 1.0 / 3.0}) {
    const auto samples = null_vector_samples(20000, eps, 3);
    for (const auto& s : samples) ASSERT_NEAR(s.lam, eps * (s.lam + s.mu + s.nu), 1e-12 * (s.mu + s.nu));
    const auto rep = null_vector_condition_check(samples, eps);
    EXPECT_EQ(rep.violations, 0u) << eps;
  }
}

TEST(EigenAlgebra, SamplersAreDeterministic) {
  const auto a = pinched_triples(100, 0.1, 77), b = pinched_triples(100, 0.1, 77);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].lam, b[i].lam);
}

TEST(Pinching, RoundSu2HasZeroTraceFreePart) {
  const auto e = ricci_eigenvalues(ricci::homogeneous::MilnorSignature::su2(), {1, 1, 1});
  EXPECT_NEAR(e.lam, e.nu, 1e-14);
  EXPECT_GT(e.lam, 0);
}

TEST(Pinching, MonitorOnAnisotropicSu2) {
  ricci::homogeneous::IntegratorConfig cfg;
  cfg.t_end = 1.0;
  const auto traj = ricci::homogeneous::integrate(ricci::homogeneous::MilnorSignature::su2(), {1, 1.2, 1.5}, cfg,
                                                  ricci::homogeneous::FlowMode::Unnormalized);
  const auto series = pinching_monitor(traj);
  EXPECT_NEAR(series.delta, 2 * series.eps0 * series.eps0, 1e-15);
  EXPECT_TRUE(series.pass());
}
