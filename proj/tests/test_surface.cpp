#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ricci/random.hpp"
#include "ricci/surface.hpp"

using namespace ricci::surface;

namespace {

double max_abs(const Field& u) {
  double m = 0;
  for (double x : u) m = std::max(m, std::abs(x));
  return m;
}

// Random zonal profile sum a_k cos(k theta), k = 1..3.
ConformalState random_zonal(int n, ricci::rng::Stream& s, double amp) {
  const double a1 = s.uniform(-amp, amp), a2 = s.uniform(-amp, amp), a3 = s.uniform(-amp, amp);
  return ConformalState::from_function(Background::round_sphere_zonal(n), [=](double th, double) {
    return a1 * std::cos(th) + a2 * std::cos(2 * th) + a3 * std::cos(3 * th);
  });
}

ConformalState random_torus(int n, ricci::rng::Stream& s, double amp) {
  const double a = s.uniform(-amp, amp), b = s.uniform(-amp, amp), c = s.uniform(-amp, amp);
  return ConformalState::from_function(Background::flat_torus(n), [=](double x, double y) {
    return a * std::cos(x) + b * std::sin(2 * y) + c * std::cos(x) * std::cos(y);
  });
}

SurfaceFlowConfig short_run(double t_end, double interval) {
  SurfaceFlowConfig c;
  c.t_end = t_end;
  c.output_interval = interval;
  return c;
}

}  // namespace

TEST(Background, RejectsCoarseGrids) {
  EXPECT_THROW(Background::flat_torus(8), ricci::Error);
  EXPECT_THROW(Background::flat_torus(17), ricci::Error);
  EXPECT_THROW(Background::round_sphere_zonal(8), ricci::Error);
}

TEST(Background, SphereCellAreasSumToSphereArea) {
  const auto bg = Background::round_sphere_zonal(40);
  EXPECT_NEAR(bg->integrate(Field(bg->size(), 1.0)), 4 * M_PI, 1e-13);
}

TEST(Curvature, FlatTorusAndRoundSphere) {
  const auto torus = ConformalState::make(Background::flat_torus(16), Field(256, 0.0));
  EXPECT_EQ(max_abs(scalar_curvature(torus)), 0.0);
  EXPECT_EQ(average_curvature(torus), 0.0);
  const auto sphere = ConformalState::make(Background::round_sphere_zonal(32), Field(32, 0.0));
  for (double R : scalar_curvature(sphere)) EXPECT_DOUBLE_EQ(R, 2.0);
  EXPECT_NEAR(area(sphere), 4 * M_PI, 1e-13);
  EXPECT_NEAR(average_curvature(sphere), 2.0, 1e-13);
}

TEST(Curvature, ConstantRescalingOfSphere) {
  const auto s = ConformalState::make(Background::round_sphere_zonal(32), Field(32, 0.3));
  for (double R : scalar_curvature(s)) EXPECT_NEAR(R, 2 * std::exp(-0.6), 1e-14);
}

TEST(Curvature, TorusMatchesClosedForm) {
  // v = a cos x: R = e^{-2v} 2 a cos x.
  const double a = 0.3;
  const auto s = ConformalState::from_function(Background::flat_torus(32), [=](double x, double) {
    return a * std::cos(x);
  });
  const Field R = scalar_curvature(s);
  for (std::size_t i = 0; i < R.size(); ++i) {
    const double x = s.background->coordinates(i).first;
    EXPECT_NEAR(R[i], std::exp(-2 * a * std::cos(x)) * 2 * a * std::cos(x), 1e-12);
  }
}

TEST(Curvature, SphereConvergesAtSecondOrder) {
  // v = a cos(theta): lap v = -2 a cos(theta), R = e^{-2v} (2 + 4 a cos(theta)).
  const double a = 0.2;
  auto err = [&](int n) {
    const auto s = ConformalState::from_function(Background::round_sphere_zonal(n), [=](double th, double) {
      return a * std::cos(th);
    });
    const Field R = scalar_curvature(s);
    double e = 0;
    for (int i = 0; i < n; ++i) {
      const double th = s.background->theta()[i];
      e = std::max(e, std::abs(R[i] - std::exp(-2 * a * std::cos(th)) * (2 + 4 * a * std::cos(th))));
    }
    return e;
  };
  const double e1 = err(64), e2 = err(128);
  EXPECT_LT(e1, 1e-3);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
}

TEST(Curvature, GaussBonnetIsExactOnRandomStates) {
  ricci::rng::Stream s(21);
  for (int trial = 0; trial < 25; ++trial) {
    const auto sp = random_zonal(48, s, 0.4);
    EXPECT_NEAR(integrate_g(sp, scalar_curvature(sp)), 8 * M_PI, 1e-11);
    const auto tp = random_torus(32, s, 0.4);
    EXPECT_NEAR(integrate_g(tp, scalar_curvature(tp)), 0.0, 1e-11);
  }
}

TEST(Potential, SolvesPoissonEquationWithMeanZero) {
  ricci::rng::Stream s(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto st = trial % 2 ? random_zonal(48, s, 0.3) : random_torus(32, s, 0.3);
    const Field f = ricci_potential(st);
    const Field R = scalar_curvature(st);
    const double r = average_curvature(st);
    const Field lap = st.background->laplacian(f);
    for (std::size_t i = 0; i < f.size(); ++i)
      EXPECT_NEAR(std::exp(-2 * st.v[i]) * lap[i], R[i] - r, 1e-10);
    EXPECT_NEAR(integrate_g(st, f), 0.0, 1e-11);
  }
}

TEST(Soliton, RoundSphereHasVanishingResiduals) {
  const auto s = ConformalState::make(Background::round_sphere_zonal(32), Field(32, 0.0));
  const auto res = soliton_residuals(s);
  EXPECT_LT(res.M_norm, 1e-12);
  EXPECT_LT(res.I_osc, 1e-12);
}

TEST(Soliton, PerturbedTorusHasNonzeroResidual) {
  const auto s = ConformalState::from_function(Background::flat_torus(32), [](double x, double y) {
    return 0.2 * std::cos(x) * std::cos(y);
  });
  EXPECT_GT(soliton_residuals(s).M_norm, 1e-3);
}

TEST(Entropy, RequiresPositiveCurvature) {
  const auto torus = ConformalState::make(Background::flat_torus(16), Field(256, 0.0));
  try {
    entropy(torus);
    FAIL() << "expected an error";
  } catch (const ricci::Error& e) {
    EXPECT_EQ(e.kind(), ricci::ErrorKind::Inapplicable);
  }
  const auto sphere = ConformalState::make(Background::round_sphere_zonal(32), Field(32, 0.0));
  EXPECT_NEAR(entropy(sphere), 4 * M_PI * 2 * std::log(2.0), 1e-12);
}

TEST(Evolve, ZeroDataIsStationary) {
  const auto s = ConformalState::make(Background::flat_torus(16), Field(256, 0.0));
  const auto traj = evolve(s, short_run(0.5, 0.1));
  ASSERT_EQ(traj.size(), 6u);
  for (const auto& v : traj.v) EXPECT_EQ(max_abs(v), 0.0);
  EXPECT_DOUBLE_EQ(traj.times.back(), 0.5);
}

TEST(Evolve, ConservesAreaAndGaussBonnet) {
  ricci::rng::Stream s(8);
  for (int trial = 0; trial < 4; ++trial) {
    const auto s0 = trial % 2 ? random_zonal(32, s, 0.2) : random_torus(16, s, 0.2);
    const auto traj = evolve(s0, short_run(0.3, 0.1));
    const double A0 = traj.diagnostics.front().area;
    const double chi = s0.background->euler_characteristic();
    for (const auto& d : traj.diagnostics) {
      EXPECT_NEAR(d.area / A0, 1.0, 1e-7);  // exact in space, RK4 error in time
      EXPECT_NEAR(d.gauss_bonnet, 4 * M_PI * chi, 1e-10);
    }
  }
}

TEST(Evolve, CurvatureFollowsItsEvolutionEquation) {
  const auto s0 = ConformalState::from_function(Background::flat_torus(32), [](double x, double) {
    return 0.1 * std::cos(x);
  });
  const auto coarse = evolve(s0, short_run(0.2, 0.02));
  const auto fine = evolve(s0, short_run(0.2, 0.01));
  const double e1 = r_evolution_residual(coarse), e2 = r_evolution_residual(fine);
  EXPECT_LT(e2, 1e-3);
  EXPECT_GT(e1 / e2, 3.0);  // centred difference in time
}

TEST(Evolve, UpperBoundHoldsOnSphere) {
  const auto s0 = ConformalState::from_function(Background::round_sphere_zonal(32), [](double th, double) {
    return 0.1 * std::cos(th);
  });
  const auto rep = upper_bound_check(evolve(s0, short_run(0.5, 0.05)));
  EXPECT_TRUE(rep.pass(1e-8));
}

TEST(Harnack, StationaryTorusDistanceIsStraightLine) {
  // Endpoints on path-grid nodes and a whole number of nodes per level, so the
  // straight line is a grid path.
  const auto s0 = ConformalState::make(Background::flat_torus(16), Field(256, 0.0));
  const auto traj = evolve(s0, short_run(1.0, 0.25));
  const double h = 2 * M_PI / 64;
  const double D = harnack_distance(traj, {10 * h, 0.1}, {34 * h, 0.9}, {64, 8});
  EXPECT_NEAR(D, (24 * h) * (24 * h) / 0.8, 1e-12);
  // Wrapping: the short way around is used.
  const double D2 = harnack_distance(traj, {2 * h, 0.1}, {62 * h, 0.9}, {64, 4});
  EXPECT_NEAR(D2, (4 * h) * (4 * h) / 0.8, 1e-12);
}

TEST(Harnack, DistanceRespectsStaticLowerBound) {
  // Grid paths are admissible paths, so the lower bound holds for any grid.
  const auto s0 = ConformalState::from_function(Background::round_sphere_zonal(32), [](double th, double) {
    return 0.2 * std::cos(th);
  });
  const auto traj = evolve(s0, short_run(0.5, 0.05));
  ricci::rng::Stream s(13);
  for (int i = 0; i < 10; ++i) {
    const SpacetimePoint a{s.uniform(0.2, 3.0), s.uniform(0.0, 0.2)};
    const SpacetimePoint b{s.uniform(0.2, 3.0), s.uniform(0.3, 0.5)};
    const double D = harnack_distance(traj, a, b, {64, 8});
    const auto bounds = harnack_static_bounds(traj, a, b);
    EXPECT_GE(D, bounds.lower * (1 - 1e-9));
    EXPECT_LE(bounds.lower, bounds.upper);
  }
}

TEST(Harnack, HoldsOnShortSphereRun) {
  const auto s0 = ConformalState::from_function(Background::round_sphere_zonal(32), [](double th, double) {
    return 0.05 * std::cos(th);
  });
  const auto traj = evolve(s0, short_run(1.0, 0.05));
  ricci::rng::Stream s(2);
  std::vector<HarnackPair> pairs;
  for (int i = 0; i < 10; ++i) {
    const double tau = s.uniform(0.05, 0.5);
    pairs.push_back({{s.uniform(0, M_PI), tau}, {s.uniform(0, M_PI), s.uniform(tau + 0.05, 1.0)}});
  }
  const auto rep = harnack_check(traj, pairs, 1e-8, {64, 16});
  EXPECT_EQ(rep.violations, 0);
  EXPECT_GE(rep.worst_slack, -1e-8);
}

TEST(Harnack, RejectsTorus) {
  const auto s0 = ConformalState::make(Background::flat_torus(16), Field(256, 0.0));
  const auto traj = evolve(s0, short_run(0.2, 0.1));
  EXPECT_THROW(harnack_check(traj, {{{0, 0.05}, {1, 0.15}}}), ricci::Error);
}

TEST(Csv, DiagnosticsHeader) {
  const auto s0 = ConformalState::make(Background::round_sphere_zonal(16), Field(16, 0.0));
  const auto traj = evolve(s0, short_run(0.1, 0.05));
  std::ostringstream os;
  write_diagnostics_csv(os, traj);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "t,area,r,Rmin,Rmax,gauss_bonnet,entropy,M_norm,I_osc");
  std::ostringstream snap;
  write_snapshot_csv(snap, traj.state(1));
  EXPECT_EQ(snap.str().substr(0, snap.str().find('\n')), "theta,v,R");
}
