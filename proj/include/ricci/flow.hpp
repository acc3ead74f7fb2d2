#pragma once

// Homogeneous Ricci flow dA/dt = -2 Ric(F1,F1) (+ (2/3) R A when volume-normalized),
// and likewise for B and C, integrated with an adaptive Dormand-Prince pair.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ricci/error.hpp"
#include "ricci/homogeneous.hpp"
#include "ricci/ode.hpp"

namespace ricci::homogeneous {

enum class FlowMode { Unnormalized, Normalized };

inline const char* to_string(FlowMode m) {
  return m == FlowMode::Normalized ? "normalized" : "unnormalized";
}

struct IntegratorConfig {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;  // also the time resolution of singularity detection
  double max_step = 1e-2;
  double t_end = 1.0;
  double singularity_floor = 1e-8;  // relative to the initial scale (ABC)^(1/3)
  double curvature_ceiling = 1e8;

  void validate() const {
    require(rel_tol > 0 && abs_tol > 0 && max_step > 0, "tolerances and max_step must be positive");
    require(t_end > 0 && std::isfinite(t_end), "t_end must be positive");
    require(singularity_floor > 0 && curvature_ceiling > 0, "singularity thresholds must be positive");
  }
};

struct SingularityEvent {
  double time = 0.0;
  std::string reason;  // "floor" or "ceiling"
};

/// Right-hand side of the flow for a given signature and mode.
inline Vec3 flow_velocity(const MilnorSignature& sig, FlowMode mode, const Vec3& y) {
  const DiagonalMetric g = DiagonalMetric::from_vec(y);
  const CurvatureData k = ricci_diagonal(sig, g);
  Vec3 v = -2.0 * k.ricci;
  if (mode == FlowMode::Normalized) v += (2.0 / 3.0) * k.scalar * y;
  return v;
}

struct FlowTrajectory {
  MilnorSignature sig;
  FlowMode mode = FlowMode::Unnormalized;
  std::vector<double> times;
  std::vector<DiagonalMetric> states;
  std::optional<SingularityEvent> event;

  std::size_t size() const { return times.size(); }
  const DiagonalMetric& back() const { return states.back(); }

  /// Cubic Hermite interpolation using the flow velocity at the bracketing samples.
  DiagonalMetric at(double t) const {
    require(!times.empty(), "empty trajectory");
    require(t >= times.front() - 1e-15 && t <= times.back() + 1e-15, "time outside trajectory span");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = (it == times.begin()) ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    if (k + 1 >= times.size()) return states.back();
    const double t0 = times[k], t1 = times[k + 1], h = t1 - t0;
    const Vec3 y0 = states[k].vec(), y1 = states[k + 1].vec();
    const Vec3 d0 = flow_velocity(sig, mode, y0), d1 = flow_velocity(sig, mode, y1);
    const double s = (t - t0) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return DiagonalMetric::from_vec(h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1);
  }
};

namespace detail {

inline bool crossed(const MilnorSignature& sig, const Vec3& y, double floor, double ceiling,
                    std::string* reason) {
  if (!y.allFinite() || y.minCoeff() < floor) {
    if (reason) *reason = "floor";
    return true;
  }
  const double kmax = sectional_curvatures(sig, DiagonalMetric::from_vec(y)).cwiseAbs().maxCoeff();
  if (!(kmax <= ceiling)) {
    if (reason) *reason = "ceiling";
    return true;
  }
  return false;
}

}  // namespace detail

/// Adaptive integration up to t_end or a detected singularity (min coefficient below
/// the floor, or a sectional curvature above the ceiling). The crossing time is
/// bracketed to within abs_tol.
inline FlowTrajectory integrate(const MilnorSignature& sig, const DiagonalMetric& g0,
                                const IntegratorConfig& cfg, FlowMode mode) {
  cfg.validate();
  require(g0.valid(), "initial metric must be positive");
  using DP = ode::DormandPrince<Vec3>;

  FlowTrajectory traj;
  traj.sig = sig;
  traj.mode = mode;
  traj.times.push_back(0.0);
  traj.states.push_back(g0);

  const double scale = std::cbrt(g0.A * g0.B * g0.C);
  const double floor = cfg.singularity_floor * scale;
  auto f = [&](double, const Vec3& y) { return flow_velocity(sig, mode, y); };

  double t = 0.0;
  Vec3 y = g0.vec();
  double h = std::min({cfg.max_step, cfg.t_end, 1e-3 * scale});
  ode::PiController ctl;
  Vec3 y1, err;

  while (t < cfg.t_end) {
    h = std::min({h, cfg.max_step, cfg.t_end - t});
    DP::step(f, t, y, h, y1, err);
    // The flow commutes with (g, t) -> (s g, s t), so the absolute tolerance
    // is taken relative to the current size of the metric.
    const double current_scale = std::cbrt(std::abs(y[0] * y[1] * y[2]));
    double en = ode::weighted_rms(err, y, y1, cfg.rel_tol, cfg.abs_tol * current_scale);
    if (!std::isfinite(en)) en = 1e10;
    if (en > 1.0) {
      h *= ctl.next_factor(en, false);
      if (h < 1e-15 * std::max(1.0, t))
        throw NumericalFailure<DiagonalMetric>("step size underflow", DiagonalMetric::from_vec(y), t);
      continue;
    }
    std::string reason;
    if (detail::crossed(sig, y1, floor, cfg.curvature_ceiling, &reason)) {
      // Bisect the crossing with error-controlled steps: a crossing step is
      // retried at half length until it is shorter than the time tolerance.
      if (h <= cfg.abs_tol) {
        traj.event = SingularityEvent{t + 0.5 * h, reason};
        break;
      }
      h *= 0.5;
      continue;
    }
    t += h;
    y = y1;
    traj.times.push_back(t);
    traj.states.push_back(DiagonalMetric::from_vec(y));
    h *= ctl.next_factor(en, true);
  }
  return traj;
}

/// Fixed-step fifth-order integration; used for convergence-order checks.
inline FlowTrajectory integrate_fixed_step(const MilnorSignature& sig, const DiagonalMetric& g0, double h,
                                           double t_end, FlowMode mode) {
  require(h > 0 && t_end > 0, "step and horizon must be positive");
  using DP = ode::DormandPrince<Vec3>;
  auto f = [&](double, const Vec3& y) { return flow_velocity(sig, mode, y); };
  FlowTrajectory traj{sig, mode, {0.0}, {g0}, std::nullopt};
  const auto steps = static_cast<long>(std::llround(t_end / h));
  Vec3 y = g0.vec(), y1, err;
  for (long n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * h;
    DP::step(f, t, y, h, y1, err);
    y = y1;
    traj.times.push_back(static_cast<double>(n + 1) * h);
    traj.states.push_back(DiagonalMetric::from_vec(y));
  }
  return traj;
}

/// Explicit Nil solution from (A0, B0, C0).
inline DiagonalMetric nil_closed_form(const DiagonalMetric& g0, double t) {
  require(g0.valid() && t >= 0, "nil closed form needs a valid metric and t >= 0");
  const double a = g0.A, b = g0.B, c = g0.C;
  const double s = 12.0 * t + b * c / a;
  return {std::pow(a, 2.0 / 3) * std::cbrt(b) * std::cbrt(c) / std::cbrt(s),
          std::cbrt(a) * std::pow(b, 2.0 / 3) / std::cbrt(c) * std::cbrt(s),
          std::cbrt(a) / std::cbrt(b) * std::pow(c, 2.0 / 3) * std::cbrt(s)};
}

/// Homothety factor 1 - 2 lam t of an Einstein solution Ric = lam g.
inline double einstein_scale_factor(double lam, double t) {
  require(t >= 0, "time must be non-negative");
  const double s = 1.0 - 2.0 * lam * t;
  require(s > 0, "Einstein solution does not exist at this time");
  return s;
}

inline DiagonalMetric einstein_closed_form(const MilnorSignature& sig, const DiagonalMetric& g0, double lam,
                                           double t) {
  require(g0.valid(), "initial metric must be positive");
  const CurvatureData k = ricci_diagonal(sig, g0);
  const Vec3 defect = k.ricci - lam * g0.vec();
  if (defect.cwiseAbs().maxCoeff() > 1e-10 * (1.0 + std::abs(lam)) * g0.vec().maxCoeff())
    throw Error(ErrorKind::NotEinstein, "initial metric does not satisfy Ric = lam g");
  return g0.scaled(einstein_scale_factor(lam, t));
}

/// Rescales an unnormalized trajectory to unit volume density, psi = (ABC)^(-1/3), with
/// the new time given by the trapezoidal integral of psi.
inline FlowTrajectory rescale_to_normalized(const FlowTrajectory& traj) {
  require(traj.mode == FlowMode::Unnormalized, "trajectory is already normalized");
  require(!traj.times.empty(), "empty trajectory");
  FlowTrajectory out;
  out.sig = traj.sig;
  out.mode = FlowMode::Normalized;
  double tau = 0.0, psi_prev = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const DiagonalMetric& g = traj.states[k];
    const double psi = 1.0 / std::cbrt(g.A * g.B * g.C);
    if (k > 0) tau += 0.5 * (psi + psi_prev) * (traj.times[k] - traj.times[k - 1]);
    out.times.push_back(tau);
    out.states.push_back(g.scaled(psi));
    psi_prev = psi;
  }
  return out;
}

/// Largest relative deviation of sqrt(ABC) from its initial value.
inline double volume_drift(const FlowTrajectory& traj) {
  const double v0 = traj.states.front().volume_density();
  double worst = 0.0;
  for (const auto& g : traj.states) worst = std::max(worst, std::abs(g.volume_density() - v0) / v0);
  return worst;
}

struct CollapseSample {
  double t, E, F;
};

/// E = B + C and F = (B - C)/eps, where the caller's first coefficient is eps*A.
inline std::vector<CollapseSample> collapse_observables(const FlowTrajectory& traj, double eps_split) {
  require(eps_split > 0, "epsilon must be positive");
  std::vector<CollapseSample> out;
  out.reserve(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& g = traj.states[k];
    out.push_back({traj.times[k], g.B + g.C, (g.B - g.C) / eps_split});
  }
  return out;
}

/// log|B - C| along an SU(2) trajectory, integrated from
///   d/dt log|B - C| = 4 (A^2 - (B + C)^2) / (A B C)
/// with Simpson's rule on each accepted step. Once eps*A is small the gap drops
/// far below the resolution of B and C themselves, so F = (B - C)/eps has to be
/// read from this series rather than from the difference of coefficients.
inline std::vector<double> su2_log_gap(const FlowTrajectory& traj) {
  require(traj.sig == MilnorSignature::su2(), "log gap needs an SU(2) trajectory");
  require(!traj.times.empty(), "empty trajectory");
  const auto& g0 = traj.states.front();
  require(g0.B != g0.C, "log gap needs B != C at t = 0");
  auto rate = [](const DiagonalMetric& g) { return 4 * (g.A * g.A - (g.B + g.C) * (g.B + g.C)) / (g.A * g.B * g.C); };
  std::vector<double> out{std::log(std::abs(g0.B - g0.C))};
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double t0 = traj.times[k - 1], t1 = traj.times[k];
    const double mid = rate(traj.at(0.5 * (t0 + t1)));
    out.push_back(out.back() + (t1 - t0) / 6 * (rate(traj.states[k - 1]) + 4 * mid + rate(traj.states[k])));
  }
  return out;
}

struct SolReduced {
  std::vector<double> t, B, G;
  double max_ac_drift = 0.0;  // max |A C - A0 C0|
};

inline SolReduced sol_reduced(const FlowTrajectory& traj) {
  require(traj.sig == MilnorSignature::sol(), "sol_reduced needs a Sol trajectory");
  SolReduced r;
  const double ac0 = traj.states.front().A * traj.states.front().C;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& g = traj.states[k];
    r.t.push_back(traj.times[k]);
    r.B.push_back(g.B);
    r.G.push_back(g.A / g.C);
    r.max_ac_drift = std::max(r.max_ac_drift, std::abs(g.A * g.C - ac0));
  }
  return r;
}

struct MonotonicityReport {
  int ordering_violations = 0;  // eps*A <= C <= B broken
  int ratio_violations = 0;     // (B - eps*A)/(eps*A) increased
  double worst_ordering = 0.0;
  double worst_ratio_increase = 0.0;
  bool pass() const { return ordering_violations == 0 && ratio_violations == 0; }
};

/// SU(2) ordering and pinching-ratio monotonicity along every accepted step.
/// The ratio is a difference of nearly equal coefficients close to the round
/// collapse, so increases below ratio_noise (about the accumulated relative
/// integration error) are not counted.
inline MonotonicityReport su2_monotonicity(const FlowTrajectory& traj, double tol = 1e-9,
                                           double ratio_noise = 1e-7) {
  MonotonicityReport rep;
  double prev_ratio = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& g = traj.states[k];
    const double scale = std::max({g.A, g.B, g.C});
    const double ord = std::min(g.C - g.A, g.B - g.C) / scale;
    if (ord < -tol) {
      ++rep.ordering_violations;
      rep.worst_ordering = std::min(rep.worst_ordering, ord);
    }
    const double ratio = (g.B - g.A) / g.A;
    if (k > 0) {
      const double inc = (ratio - prev_ratio) / std::max(1.0, std::abs(prev_ratio));
      if (inc > tol && ratio - prev_ratio > ratio_noise) {
        ++rep.ratio_violations;
        rep.worst_ratio_increase = std::max(rep.worst_ratio_increase, inc);
      }
    }
    prev_ratio = ratio;
  }
  return rep;
}

}  // namespace ricci::homogeneous
