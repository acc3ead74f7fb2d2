#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ricci/flow.hpp"

using namespace ricci::homogeneous;

namespace {

IntegratorConfig with_t_end(double t_end) {
  IntegratorConfig c;
  c.t_end = t_end;
  return c;
}

double rel_err(const DiagonalMetric& a, const DiagonalMetric& b) {
  double e = 0.0;
  for (int i = 0; i < 3; ++i) e = std::max(e, std::abs(a[i] - b[i]) / std::abs(b[i]));
  return e;
}

}  // namespace

TEST(Integrate, RoundSphereShrinksAtQuarter) {
  const auto traj = integrate(MilnorSignature::su2(), {1, 1, 1}, with_t_end(1.0), FlowMode::Unnormalized);
  ASSERT_TRUE(traj.event.has_value());
  EXPECT_NEAR(traj.event->time, 0.25, 1e-4);
  EXPECT_LT(traj.times.back(), 0.25);
}

TEST(Integrate, AbelianIsConstant) {
  const DiagonalMetric g0{2, 3, 4};
  const auto traj = integrate(MilnorSignature::abelian(), g0, with_t_end(1.0), FlowMode::Unnormalized);
  EXPECT_FALSE(traj.event.has_value());
  EXPECT_DOUBLE_EQ(traj.times.back(), 1.0);
  for (const auto& g : traj.states) {
    EXPECT_EQ(g.A, 2.0);
    EXPECT_EQ(g.B, 3.0);
    EXPECT_EQ(g.C, 4.0);
  }
}

TEST(Integrate, NilMatchesClosedFormAtOne) {
  const IntegratorConfig cfg = with_t_end(1.0);
  const auto traj = integrate(MilnorSignature::nil(), {1, 1, 1}, cfg, FlowMode::Unnormalized);
  const DiagonalMetric expect{std::pow(13.0, -1.0 / 3), std::cbrt(13.0), std::cbrt(13.0)};
  EXPECT_LT(rel_err(traj.back(), expect), 10 * cfg.rel_tol);
}

TEST(Integrate, TimesStrictlyIncreasing) {
  const auto traj = integrate(MilnorSignature::sol(), {4, 1, 1}, with_t_end(2.0), FlowMode::Unnormalized);
  for (std::size_t k = 1; k < traj.size(); ++k) EXPECT_GT(traj.times[k], traj.times[k - 1]);
}

TEST(Integrate, RejectsBadConfig) {
  IntegratorConfig cfg;
  cfg.rel_tol = 0;
  EXPECT_THROW(integrate(MilnorSignature::nil(), {1, 1, 1}, cfg, FlowMode::Unnormalized), ricci::Error);
  EXPECT_THROW(integrate(MilnorSignature::nil(), {1, -1, 1}, with_t_end(1), FlowMode::Unnormalized), ricci::Error);
}

TEST(Integrate, StepUnderflowCarriesLastState) {
  IntegratorConfig cfg;
  cfg.rel_tol = 1e-300;
  cfg.abs_tol = 1e-300;
  try {
    integrate(MilnorSignature::nil(), {1, 1, 1}, cfg, FlowMode::Unnormalized);
    FAIL() << "expected numerical failure";
  } catch (const ricci::NumericalFailure<DiagonalMetric>& e) {
    EXPECT_EQ(e.kind(), ricci::ErrorKind::NumericalFailure);
    EXPECT_TRUE(e.last_good().valid());
  }
}

TEST(NilClosedForm, Values) {
  const auto g0 = nil_closed_form({1, 1, 1}, 0.0);
  EXPECT_DOUBLE_EQ(g0.A, 1.0);
  EXPECT_DOUBLE_EQ(g0.B, 1.0);
  EXPECT_DOUBLE_EQ(g0.C, 1.0);
  const auto g1 = nil_closed_form({1, 1, 1}, 1.0);
  EXPECT_NEAR(g1.A, std::pow(13.0, -1.0 / 3), 1e-15);
  EXPECT_NEAR(g1.B, std::cbrt(13.0), 1e-14);
  EXPECT_NEAR(g1.C, std::cbrt(13.0), 1e-14);
  for (double t : {0.1, 0.5, 3.0, 10.0}) {
    const auto g = nil_closed_form({1, 1, 1}, t);
    EXPECT_NEAR(g.A * g.B * g.C, std::cbrt(12 * t + 1), 1e-12);
  }
}

TEST(NilClosedForm, SolvesTheFlowByFiniteDifferences) {
  const DiagonalMetric g0{2.0, 0.5, 3.0};
  const double h = 1e-5;
  for (double t : {0.3, 1.0, 4.0}) {
    const Vec3 fd = (nil_closed_form(g0, t + h).vec() - nil_closed_form(g0, t - h).vec()) / (2 * h);
    const Vec3 v = flow_velocity(MilnorSignature::nil(), FlowMode::Unnormalized, nil_closed_form(g0, t).vec());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(fd[i], v[i], 1e-7 * (1 + std::abs(v[i])));
  }
}

TEST(Einstein, RoundSU2) {
  const auto g = einstein_closed_form(MilnorSignature::su2(), {1, 1, 1}, 2.0, 0.1);
  EXPECT_NEAR(g.A, 0.6, 1e-15);
  EXPECT_NEAR(g.B, 0.6, 1e-15);
  EXPECT_NEAR(g.C, 0.6, 1e-15);
}

TEST(Einstein, FlatAndHyperbolicFactors) {
  const auto g = einstein_closed_form(MilnorSignature::abelian(), {1, 2, 3}, 0.0, 7.0);
  EXPECT_EQ(g.B, 2.0);
  EXPECT_DOUBLE_EQ(einstein_scale_factor(-2.0, 1.0), 5.0);
}

TEST(Einstein, Errors) {
  try {
    einstein_closed_form(MilnorSignature::su2(), {1, 2, 3}, 2.0, 0.1);
    FAIL();
  } catch (const ricci::Error& e) {
    EXPECT_EQ(e.kind(), ricci::ErrorKind::NotEinstein);
  }
  EXPECT_THROW(einstein_closed_form(MilnorSignature::su2(), {1, 1, 1}, 2.0, 0.25), ricci::Error);
}

TEST(Rescale, AbelianConstant) {
  const auto traj = integrate(MilnorSignature::abelian(), {1, 2, 4}, with_t_end(1.0), FlowMode::Unnormalized);
  const auto n = rescale_to_normalized(traj);
  const double psi = 0.5;  // (1*2*4)^(-1/3)
  for (std::size_t k = 0; k < n.size(); ++k) {
    EXPECT_NEAR(n.times[k], psi * traj.times[k], 1e-14);
    EXPECT_NEAR(n.states[k].volume_density(), 1.0, 1e-14);
    EXPECT_NEAR(n.states[k].B, 1.0, 1e-14);
  }
}

TEST(Rescale, ShrinkingRoundSphereIsFixedPoint) {
  const auto traj = integrate(MilnorSignature::su2(), {1, 1, 1}, with_t_end(1.0), FlowMode::Unnormalized);
  const auto n = rescale_to_normalized(traj);
  for (const auto& g : n.states) {
    EXPECT_NEAR(g.A, 1.0, 1e-6);
    EXPECT_NEAR(g.B, 1.0, 1e-6);
    EXPECT_NEAR(g.C, 1.0, 1e-6);
  }
}

TEST(Rescale, MatchesDirectNormalizedRun) {
  const DiagonalMetric g0{1, 2, 3};
  IntegratorConfig cfg = with_t_end(0.3);
  cfg.max_step = 1e-3;
  const auto un = integrate(MilnorSignature::su2(), g0, cfg, FlowMode::Unnormalized);
  ASSERT_FALSE(un.event.has_value());
  const auto resc = rescale_to_normalized(un);

  const DiagonalMetric n0 = g0.scaled(1.0 / std::cbrt(g0.A * g0.B * g0.C));
  IntegratorConfig ncfg = with_t_end(resc.times.back());
  const auto direct = integrate(MilnorSignature::su2(), n0, ncfg, FlowMode::Normalized);
  double sup = 0.0;
  for (std::size_t k = 0; k < resc.size(); ++k) {
    const auto d = direct.at(resc.times[k]);
    for (int i = 0; i < 3; ++i) sup = std::max(sup, std::abs(d[i] - resc.states[k][i]));
  }
  EXPECT_LT(sup, 1e-5);
  EXPECT_THROW(rescale_to_normalized(direct), ricci::Error);
}

TEST(Normalized, VolumeConserved) {
  const IntegratorConfig cfg = with_t_end(2.0);
  for (auto sig : {MilnorSignature::su2(), MilnorSignature::nil(), MilnorSignature::sol()}) {
    const auto traj = integrate(sig, {0.5, 1.5, 2.0}, cfg, FlowMode::Normalized);
    EXPECT_LT(volume_drift(traj), 10 * cfg.rel_tol) << geometry_name(sig);
  }
}

TEST(Collapse, Observables) {
  const auto traj = integrate(MilnorSignature::su2(), {0.5, 1, 1}, with_t_end(0.05), FlowMode::Unnormalized);
  for (const auto& s : collapse_observables(traj, 0.5)) EXPECT_NEAR(s.F, 0.0, 1e-12);

  const auto t2 = integrate(MilnorSignature::su2(), {0.01, 2, 1}, with_t_end(0.01), FlowMode::Unnormalized);
  EXPECT_NEAR(collapse_observables(t2, 0.01).front().F, 100.0, 1e-12);
}

TEST(Collapse, FDecreasesWithEpsilonAtFixedTime) {
  double prev = INFINITY;
  for (double eps : {1.0, 0.1, 0.01}) {
    const auto traj = integrate(MilnorSignature::su2(), {eps * 1.0, 2, 1}, with_t_end(0.1), FlowMode::Unnormalized);
    ASSERT_FALSE(traj.event.has_value()) << eps;
    const double F = collapse_observables(traj, eps).back().F;
    EXPECT_LT(F, prev) << eps;
    prev = F;
  }
}

TEST(Sol, UnitStart) {
  const auto traj = integrate(MilnorSignature::sol(), {1, 1, 1}, with_t_end(1.0), FlowMode::Unnormalized);
  const auto red = sol_reduced(traj);
  for (double G : red.G) EXPECT_NEAR(G, 1.0, 1e-12);
  EXPECT_NEAR(flow_velocity(MilnorSignature::sol(), FlowMode::Unnormalized, Vec3(1, 1, 1))[1], 16.0, 1e-13);
}

TEST(Sol, ReducedBSpeedFormula) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 y{u(rng), u(rng), u(rng)};
    const double G = y[0] / y[2];
    EXPECT_NEAR(flow_velocity(MilnorSignature::sol(), FlowMode::Unnormalized, y)[1], 8 + 4 * (1 + G * G) / G,
                1e-12 * (10 + 4 * (1 + G * G) / G));
  }
}

TEST(Sol, ConservationAndAsymptotics) {
  const auto traj = integrate(MilnorSignature::sol(), {4, 1, 1}, with_t_end(5.0), FlowMode::Unnormalized);
  const auto red = sol_reduced(traj);
  EXPECT_LT(red.max_ac_drift / 4.0, 1e-9);
  for (std::size_t k = 0; k < red.t.size(); ++k) {
    EXPECT_GE(red.B[k], 1.0 + 16 * red.t[k] - 1e-6);
    if (k > 0) {
      EXPECT_LT(std::abs(red.G[k] - 1), std::abs(red.G[k - 1] - 1));
    }
  }
  EXPECT_THROW(sol_reduced(integrate(MilnorSignature::nil(), {1, 1, 1}, with_t_end(0.1), FlowMode::Unnormalized)),
               ricci::Error);
}

TEST(SU2, OrderingAndRatioMonotone) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    double v[3] = {u(rng), u(rng), u(rng)};
    std::sort(v, v + 3);
    const auto traj =
        integrate(MilnorSignature::su2(), {v[0], v[2], v[1]}, with_t_end(10.0), FlowMode::Unnormalized);
    ASSERT_TRUE(traj.event.has_value());
    EXPECT_LT(traj.event->time, v[2] / 4.0);
    const auto rep = su2_monotonicity(traj);
    EXPECT_TRUE(rep.pass()) << rep.ordering_violations << " " << rep.ratio_violations;
  }
}

TEST(SU2, LogGapDerivativeFormula) {
  const DiagonalMetric g0{0.4, 2.0, 1.1};
  const auto traj = integrate(MilnorSignature::su2(), g0, with_t_end(0.2), FlowMode::Unnormalized);
  for (double t : {0.02, 0.08, 0.15}) {
    const auto g = traj.at(t);
    const auto v = flow_velocity(MilnorSignature::su2(), FlowMode::Unnormalized, g.vec());
    const double from_velocity = (v[1] - v[0]) / (g.B - g.A);
    const double formula = 4 * (g.C * g.C - (g.B + g.A) * (g.B + g.A)) / (g.A * g.B * g.C);
    EXPECT_NEAR(from_velocity, formula, 1e-10 * std::abs(formula));
  }
}

TEST(SU2, LogGapMatchesDirectDifferenceWhenResolved) {
  for (const DiagonalMetric g0 : {DiagonalMetric{1, 2, 1}, DiagonalMetric{0.5, 2, 1}, DiagonalMetric{0.7, 1.1, 2.5}}) {
    const auto traj = integrate(MilnorSignature::su2(), g0, with_t_end(0.1), FlowMode::Unnormalized);
    const auto lg = su2_log_gap(traj);
    ASSERT_EQ(lg.size(), traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const double direct = std::log(std::abs(traj.states[k].B - traj.states[k].C));
      EXPECT_NEAR(lg[k], direct, 1e-6) << k;
    }
    // Same formula from the flow velocity.
    const auto g = traj.states.back();
    const auto v = flow_velocity(MilnorSignature::su2(), FlowMode::Unnormalized, g.vec());
    EXPECT_NEAR((v[1] - v[2]) / (g.B - g.C), 4 * (g.A * g.A - (g.B + g.C) * (g.B + g.C)) / (g.A * g.B * g.C),
                1e-9 * std::abs(v[1] / (g.B - g.C)));
  }
  EXPECT_THROW(su2_log_gap(integrate(MilnorSignature::su2(), {1, 1, 1}, with_t_end(0.1), FlowMode::Unnormalized)),
               ricci::Error);
}

TEST(Order, FixedStepConvergesAtFifthOrder) {
  const DiagonalMetric g0{1, 1, 1};
  auto err = [&](double h) {
    const auto traj = integrate_fixed_step(MilnorSignature::nil(), g0, h, 1.0, FlowMode::Unnormalized);
    return rel_err(traj.back(), nil_closed_form(g0, 1.0));
  };
  const double e1 = err(0.05), e2 = err(0.025);
  EXPECT_GT(e1 / e2, 16.0);
}
