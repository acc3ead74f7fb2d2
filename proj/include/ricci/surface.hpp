#pragma once

// Normalized Ricci flow on surfaces, g = e^{2v} h over a fixed background h:
// a flat square torus (spectral) or the round unit sphere restricted to zonal
// fields (finite volumes on staggered colatitude nodes).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "ricci/error.hpp"
#include "ricci/io.hpp"
#include "ricci/parallel.hpp"
#include "ricci/spectral.hpp"

namespace ricci::surface {

using Field = std::vector<double>;

enum class BackgroundKind { FlatTorus, RoundSphereZonal };

inline const char* to_string(BackgroundKind k) {
  return k == BackgroundKind::FlatTorus ? "flat_torus" : "round_sphere_zonal";
}

class Background {
 public:
  static std::shared_ptr<const Background> flat_torus(int n) {
    require(n >= 16 && n % 2 == 0, "torus grid size must be even and at least 16");
    auto b = std::shared_ptr<Background>(new Background);
    b->kind_ = BackgroundKind::FlatTorus;
    b->n_ = n;
    b->grid_.emplace(2, n);
    const double h = b->grid_->spacing();
    b->weights_.assign(static_cast<std::size_t>(n) * n, h * h);
    return b;
  }

  static std::shared_ptr<const Background> round_sphere_zonal(int n) {
    require(n >= 16, "sphere needs at least 16 colatitude nodes");
    auto b = std::shared_ptr<Background>(new Background);
    b->kind_ = BackgroundKind::RoundSphereZonal;
    b->n_ = n;
    const double d = M_PI / n;
    b->theta_.resize(n);
    b->weights_.resize(n);
    b->face_coef_.assign(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
      b->theta_[i] = (i + 0.5) * d;
      // Exact area of the band between the neighbouring faces.
      b->weights_[i] = 2.0 * M_PI * (std::cos(i * d) - std::cos((i + 1) * d));
    }
    for (int k = 1; k < n; ++k) b->face_coef_[k] = 2.0 * M_PI * std::sin(k * d) / d;
    return b;
  }

  BackgroundKind kind() const { return kind_; }
  bool is_torus() const { return kind_ == BackgroundKind::FlatTorus; }
  int n() const { return n_; }
  std::size_t size() const { return weights_.size(); }
  double curvature() const { return is_torus() ? 0.0 : 2.0; }
  int euler_characteristic() const { return is_torus() ? 0 : 2; }
  double spacing() const { return is_torus() ? grid_->spacing() : M_PI / n_; }
  const Field& weights() const { return weights_; }
  const std::vector<double>& theta() const { return theta_; }
  const spectral::PeriodicGrid& grid() const { return *grid_; }

  /// Node coordinates: (x, y) on the torus, (theta, 0) on the sphere.
  std::pair<double, double> coordinates(std::size_t i) const {
    if (is_torus()) return {grid_->coordinate(i, 0), grid_->coordinate(i, 1)};
    return {theta_[i], 0.0};
  }

  void check(const Field& u) const { require(u.size() == size(), "field does not match the background grid"); }

  /// Integral against the background area form.
  double integrate(const Field& u) const {
    check(u);
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += weights_[i] * u[i];
    return s;
  }

  Field laplacian(const Field& u) const {
    check(u);
    if (is_torus()) return grid_->laplacian(u);
    Field out(n_);
    for (int i = 0; i < n_; ++i) {
      const double up = i + 1 < n_ ? face_coef_[i + 1] * (u[i + 1] - u[i]) : 0.0;
      const double down = i > 0 ? face_coef_[i] * (u[i] - u[i - 1]) : 0.0;
      out[i] = (up - down) / weights_[i];
    }
    return out;
  }

  /// Solution of lap(w) = rhs, defined up to a constant; rhs must integrate to zero.
  Field solve_poisson(const Field& rhs) const {
    check(rhs);
    if (is_torus()) return grid_->inverse_laplacian(rhs);
    Field out(n_, 0.0);
    double flux = 0.0;
    for (int i = 0; i + 1 < n_; ++i) {
      flux += weights_[i] * rhs[i];
      out[i + 1] = out[i] + flux / face_coef_[i + 1];
    }
    return out;
  }

  /// First and second derivatives. Torus: (dx, dy, dxx, dyy, dxy); sphere: (d, 0, dd, 0, 0).
  struct Derivatives {
    Field dx, dy, dxx, dyy, dxy;
  };

  Derivatives derivatives(const Field& u) const {
    check(u);
    Derivatives d;
    if (is_torus()) {
      const auto s = grid_->forward(u);
      d.dx = grid_->derivative(s, {1, 0, 0, 0});
      d.dy = grid_->derivative(s, {0, 1, 0, 0});
      d.dxx = grid_->derivative(s, {2, 0, 0, 0});
      d.dyy = grid_->derivative(s, {0, 2, 0, 0});
      d.dxy = grid_->derivative(s, {1, 1, 0, 0});
      return d;
    }
    const double h = spacing();
    d.dx.resize(n_);
    d.dxx.resize(n_);
    d.dy.assign(n_, 0.0);
    d.dyy.assign(n_, 0.0);
    d.dxy.assign(n_, 0.0);
    for (int i = 0; i < n_; ++i) {
      // Reflection across the poles: zonal fields are even in the colatitude.
      const double lo = i > 0 ? u[i - 1] : u[0];
      const double hi = i + 1 < n_ ? u[i + 1] : u[n_ - 1];
      d.dx[i] = (hi - lo) / (2 * h);
      d.dxx[i] = (hi - 2 * u[i] + lo) / (h * h);
    }
    return d;
  }

  /// |grad u|^2 with respect to h.
  Field gradient_norm_sq(const Field& u) const {
    const auto d = derivatives(u);
    Field out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d.dx[i] * d.dx[i] + d.dy[i] * d.dy[i];
    return out;
  }

 private:
  Background() = default;

  BackgroundKind kind_ = BackgroundKind::FlatTorus;
  int n_ = 0;
  std::optional<spectral::PeriodicGrid> grid_;
  Field weights_;
  std::vector<double> theta_;
  std::vector<double> face_coef_;  // 2 pi sin(theta_face) / dtheta, zero at the poles
};

using BackgroundPtr = std::shared_ptr<const Background>;

struct ConformalState {
  BackgroundPtr background;
  Field v;
  double t = 0.0;

  static ConformalState make(BackgroundPtr bg, Field v, double t = 0.0) {
    require(bg != nullptr, "missing background");
    bg->check(v);
    for (double x : v) require(std::isfinite(x), "conformal factor must be finite");
    return ConformalState{std::move(bg), std::move(v), t};
  }

  /// Samples f(x, y) on the torus or f(theta) on the sphere.
  static ConformalState from_function(BackgroundPtr bg, const std::function<double(double, double)>& f) {
    Field v(bg->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto [a, b] = bg->coordinates(i);
      v[i] = f(a, b);
    }
    return make(std::move(bg), std::move(v));
  }
};

inline double area(const ConformalState& s) {
  Field e(s.v.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::exp(2 * s.v[i]);
  return s.background->integrate(e);
}

/// R_g = e^{-2v} (R_h - 2 lap_h v).
inline Field scalar_curvature(const Background& bg, const Field& v) {
  Field lap = bg.laplacian(v);
  for (std::size_t i = 0; i < lap.size(); ++i) lap[i] = std::exp(-2 * v[i]) * (bg.curvature() - 2 * lap[i]);
  return lap;
}

inline Field scalar_curvature(const ConformalState& s) { return scalar_curvature(*s.background, s.v); }

/// r = 4 pi chi / A.
inline double average_curvature(const ConformalState& s) {
  return 4 * M_PI * s.background->euler_characteristic() / area(s);
}

/// Integral of u against dmu_g = e^{2v} dmu_h.
inline double integrate_g(const ConformalState& s, const Field& u) {
  Field w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) w[i] = u[i] * std::exp(2 * s.v[i]);
  return s.background->integrate(w);
}

/// Mean-zero (w.r.t. dmu_g) solution of lap_g f = R - r.
inline Field ricci_potential(const ConformalState& s) {
  const auto& bg = *s.background;
  const Field R = scalar_curvature(s);
  const double A = area(s);
  const double r = 4 * M_PI * bg.euler_characteristic() / A;
  Field rhs(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) rhs[i] = std::exp(2 * s.v[i]) * (R[i] - r);
  const double mean = bg.integrate(rhs) / A;
  if (std::abs(mean) > 1e-8)
    throw Error(ErrorKind::InconsistentState, "R - r does not integrate to zero against the evolving area form");
  Field f = bg.solve_poisson(rhs);
  const double shift = integrate_g(s, f) / A;
  for (double& x : f) x -= shift;
  return f;
}

struct SolitonResiduals {
  double M_norm = 0.0;  // sup |trace-free Hessian of f|_g
  Field h_field;        // lap_g f + |grad f|_g^2
  Field I_field;        // R + |grad f|_g^2 + r f
  double I_osc = 0.0;
};

/// Soliton quantities for a given potential f (normally ricci_potential(s)).
inline SolitonResiduals soliton_residuals(const ConformalState& s, const Field& f) {
  const auto& bg = *s.background;
  bg.check(f);
  const auto df = bg.derivatives(f);
  const auto dv = bg.derivatives(s.v);
  const Field R = scalar_curvature(s);
  const double r = average_curvature(s);
  const Field lap_f = bg.laplacian(f);
  SolitonResiduals out;
  out.h_field.resize(f.size());
  out.I_field.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double conf = std::exp(-2 * s.v[i]);
    double m;
    if (bg.is_torus()) {
      const double m11 = 0.5 * (df.dxx[i] - df.dyy[i]) - (dv.dx[i] * df.dx[i] - dv.dy[i] * df.dy[i]);
      const double m12 = df.dxy[i] - dv.dx[i] * df.dy[i] - dv.dy[i] * df.dx[i];
      m = conf * std::sqrt(2 * m11 * m11 + 2 * m12 * m12);
    } else {
      const double th = bg.theta()[i];
      const double a = df.dxx[i] - std::cos(th) / std::sin(th) * df.dx[i] - 2 * dv.dx[i] * df.dx[i];
      m = conf * std::abs(a) / std::sqrt(2.0);
    }
    out.M_norm = std::max(out.M_norm, m);
    const double grad2 = conf * (df.dx[i] * df.dx[i] + df.dy[i] * df.dy[i]);
    out.h_field[i] = conf * lap_f[i] + grad2;
    out.I_field[i] = R[i] + grad2 + r * f[i];
  }
  const auto [lo, hi] = std::minmax_element(out.I_field.begin(), out.I_field.end());
  out.I_osc = *hi - *lo;
  return out;
}

inline SolitonResiduals soliton_residuals(const ConformalState& s) { return soliton_residuals(s, ricci_potential(s)); }

/// Integral of R log R against dmu_g; requires R > 0.
inline double entropy(const ConformalState& s) {
  const Field R = scalar_curvature(s);
  Field w(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) {
    if (!(R[i] > 0)) throw Error(ErrorKind::Inapplicable, "entropy needs R > 0 everywhere");
    w[i] = R[i] * std::log(R[i]);
  }
  return integrate_g(s, w);
}

struct SurfaceDiagnostics {
  double t = 0.0;
  Field R;
  double area = 0.0;
  double r = 0.0;
  double Rmin = 0.0, Rmax = 0.0;
  double gauss_bonnet = 0.0;      // integral of R dmu_g
  std::optional<double> entropy;  // present when R > 0
  Field potential_f;
  double M_norm = 0.0;
  double I_osc = 0.0;
  double R_l2 = 0.0;       // integral of R^2 dmu_g
  double gradR_l2 = 0.0;   // integral of |grad R|_g^2 dmu_g (conformally invariant)
};

inline SurfaceDiagnostics diagnostics(const ConformalState& s) {
  const auto& bg = *s.background;
  SurfaceDiagnostics d;
  d.t = s.t;
  d.R = scalar_curvature(s);
  d.area = area(s);
  d.r = 4 * M_PI * bg.euler_characteristic() / d.area;
  const auto [lo, hi] = std::minmax_element(d.R.begin(), d.R.end());
  d.Rmin = *lo;
  d.Rmax = *hi;
  d.gauss_bonnet = integrate_g(s, d.R);
  if (d.Rmin > 0) d.entropy = entropy(s);
  d.potential_f = ricci_potential(s);
  const auto sol = soliton_residuals(s, d.potential_f);
  d.M_norm = sol.M_norm;
  d.I_osc = sol.I_osc;
  Field R2(d.R.size());
  for (std::size_t i = 0; i < R2.size(); ++i) R2[i] = d.R[i] * d.R[i];
  d.R_l2 = integrate_g(s, R2);
  const Field lapR = bg.laplacian(d.R);
  Field RlapR(d.R.size());
  for (std::size_t i = 0; i < RlapR.size(); ++i) RlapR[i] = -d.R[i] * lapR[i];
  d.gradR_l2 = bg.integrate(RlapR);
  return d;
}

struct SurfaceFlowConfig {
  double t_end = 5.0;
  double output_interval = 0.05;
  double cfl = 0.4;  // dt = cfl * h^2 / (4 max e^{-2v})
  bool with_diagnostics = true;

  void validate() const {
    require(t_end > 0 && output_interval > 0, "t_end and output_interval must be positive");
    require(cfl > 0 && cfl <= 1, "cfl must lie in (0, 1]");
  }
};

struct SurfaceTrajectory {
  BackgroundPtr background;
  std::vector<double> times;
  std::vector<Field> v;
  std::vector<SurfaceDiagnostics> diagnostics;  // empty unless requested

  std::size_t size() const { return times.size(); }
  ConformalState state(std::size_t k) const { return ConformalState{background, v[k], times[k]}; }
};

/// dv/dt = (r - R) / 2, with r taken from the current area.
inline Field surface_velocity(const Background& bg, const Field& v) {
  Field R = scalar_curvature(bg, v);
  Field e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e[i] = std::exp(2 * v[i]);
  const double r = 4 * M_PI * bg.euler_characteristic() / bg.integrate(e);
  for (double& x : R) x = 0.5 * (r - x);
  return R;
}

inline double stable_step(const Background& bg, const Field& v, double cfl) {
  const double vmin = *std::min_element(v.begin(), v.end());
  const double h = bg.spacing();
  return cfl * h * h / (4 * std::exp(-2 * vmin));
}

inline SurfaceTrajectory evolve(const ConformalState& s0, const SurfaceFlowConfig& cfg) {
  cfg.validate();
  const auto& bg = *s0.background;
  SurfaceTrajectory traj;
  traj.background = s0.background;
  traj.times.push_back(s0.t);
  traj.v.push_back(s0.v);

  Field v = s0.v, k1, k2, k3, k4, tmp(v.size());
  auto axpy = [&](const Field& a, double c, const Field& b) {
    for (std::size_t i = 0; i < a.size(); ++i) tmp[i] = a[i] + c * b[i];
    return tmp;
  };
  const std::size_t n_out = static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.output_interval - 1e-9));
  for (std::size_t k = 1; k <= n_out; ++k) {
    const double t_prev = traj.times.back();
    const double t_next = s0.t + std::min(cfg.t_end, static_cast<double>(k) * cfg.output_interval);
    const double span = t_next - t_prev;
    const auto m = static_cast<long>(std::ceil(span / stable_step(bg, v, cfg.cfl)));
    const double dt = span / static_cast<double>(m);
    for (long j = 0; j < m; ++j) {
      k1 = surface_velocity(bg, v);
      k2 = surface_velocity(bg, axpy(v, 0.5 * dt, k1));
      k3 = surface_velocity(bg, axpy(v, 0.5 * dt, k2));
      k4 = surface_velocity(bg, axpy(v, dt, k3));
      bool finite = true;
      Field next(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) {
        next[i] = v[i] + dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        finite = finite && std::isfinite(next[i]);
      }
      if (!finite) {
        const double t_fail = t_prev + j * dt;
        throw NumericalFailure<ConformalState>("non-finite conformal factor", ConformalState{s0.background, v, t_fail},
                                               t_fail);
      }
      v = std::move(next);
    }
    traj.times.push_back(t_next);
    traj.v.push_back(v);
  }

  if (cfg.with_diagnostics) {
    traj.diagnostics.resize(traj.size());
    parallel_for(traj.size(), [&](std::size_t k) { traj.diagnostics[k] = diagnostics(traj.state(k)); });
  }
  return traj;
}

/// Sup-norm of the centred difference of R in time minus (lap_g R + R (R - r)),
/// over interior samples. Samples must be equally spaced.
inline double r_evolution_residual(const SurfaceTrajectory& traj) {
  require(traj.size() >= 3, "need at least three samples");
  const auto& bg = *traj.background;
  const double dt = traj.times[1] - traj.times[0];
  for (std::size_t k = 2; k < traj.size(); ++k)
    require(std::abs(traj.times[k] - traj.times[k - 1] - dt) <= 1e-9 * dt, "samples must be equally spaced");
  std::vector<Field> R(traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k) R[k] = scalar_curvature(bg, traj.v[k]);
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const auto s = traj.state(k);
    const double r = average_curvature(s);
    const Field lap = bg.laplacian(R[k]);
    for (std::size_t i = 0; i < lap.size(); ++i) {
      const double dRdt = (R[k + 1][i] - R[k - 1][i]) / (2 * dt);
      const double rhs = std::exp(-2 * s.v[i]) * lap[i] + R[k][i] * (R[k][i] - r);
      worst = std::max(worst, std::abs(dRdt - rhs));
    }
  }
  return worst;
}

/// max_t [max R(t) - (C e^{rt} + r)] with C = max R(0) - r.
struct UpperBoundReport {
  double C = 0.0;
  double worst_excess = -std::numeric_limits<double>::infinity();
  bool pass(double tol) const { return worst_excess <= tol; }
};

inline UpperBoundReport upper_bound_check(const SurfaceTrajectory& traj) {
  require(!traj.diagnostics.empty(), "trajectory has no diagnostics");
  UpperBoundReport rep;
  const auto& d0 = traj.diagnostics.front();
  rep.C = d0.Rmax - d0.r;
  for (const auto& d : traj.diagnostics) {
    const double bound = rep.C * std::exp(d.r * (d.t - d0.t)) + d.r;
    rep.worst_excess = std::max(rep.worst_excess, d.Rmax - bound);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Harnack path functional along one coordinate: colatitude on the sphere, x on
// the torus (fields constant in y; the row y = 0 is used).

struct SpacetimePoint {
  double x = 0.0;
  double t = 0.0;
};

struct PathGrid {
  int nodes = 256;
  int levels = 32;
};

namespace detail {

inline double row_value(const Background& bg, const Field& u, int i) {
  return bg.is_torus() ? u[static_cast<std::size_t>(i) * bg.n()] : u[i];
}

inline double spatial_interp(const Background& bg, const Field& u, double x) {
  const int n = bg.n();
  const double h = bg.spacing();
  if (bg.is_torus()) {
    double p = std::fmod(x / h, static_cast<double>(n));
    if (p < 0) p += n;
    const int i = std::min(static_cast<int>(p), n - 1);
    const double w = p - i;
    return (1 - w) * row_value(bg, u, i) + w * row_value(bg, u, (i + 1) % n);
  }
  const double p = x / h - 0.5;
  if (p <= 0) return u[0];
  if (p >= n - 1) return u[n - 1];
  const int i = static_cast<int>(p);
  const double w = p - i;
  return (1 - w) * u[i] + w * u[i + 1];
}

/// Index k with times[k] <= t <= times[k+1] and the weight of times[k+1].
inline std::pair<std::size_t, double> bracket(const std::vector<double>& times, double t) {
  if (times.size() == 1) return {0, 0.0};
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  k = std::min(k, times.size() - 2);
  const double w = std::clamp((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0);
  return {k, w};
}

inline double field_at(const SurfaceTrajectory& traj, const std::vector<Field>& fields, double x, double t) {
  const auto [k, w] = bracket(traj.times, t);
  const double a = spatial_interp(*traj.background, fields[k], x);
  if (w == 0.0) return a;
  return (1 - w) * a + w * spatial_interp(*traj.background, fields[k + 1], x);
}

inline double coordinate_distance(const Background& bg, double x1, double x2) {
  double d = x2 - x1;
  if (bg.is_torus()) {
    d = std::remainder(d, 2 * M_PI);
  }
  return std::abs(d);
}

inline void check_point(const SurfaceTrajectory& traj, const SpacetimePoint& p) {
  constexpr double slack = 1e-12;
  require(p.t >= traj.times.front() - slack && p.t <= traj.times.back() + slack,
          "space-time point outside the trajectory span");
  if (!traj.background->is_torus()) require(p.x >= 0 && p.x <= M_PI, "colatitude must lie in [0, pi]");
}

}  // namespace detail

/// Conformal factor and curvature at a space-time point, by linear interpolation.
inline double conformal_factor_at(const SurfaceTrajectory& traj, double x, double t) {
  return detail::field_at(traj, traj.v, x, t);
}

inline double curvature_at(const SurfaceTrajectory& traj, double x, double t) {
  const auto [k, w] = detail::bracket(traj.times, t);
  const auto& bg = *traj.background;
  auto R_of = [&](std::size_t j) {
    return traj.diagnostics.empty() ? scalar_curvature(bg, traj.v[j]) : traj.diagnostics[j].R;
  };
  const double a = detail::spatial_interp(bg, R_of(k), x);
  if (w == 0.0) return a;
  return (1 - w) * a + w * detail::spatial_interp(bg, R_of(k + 1), x);
}

/// Minimum over monotone-in-time piecewise-linear grid paths of the integral of
/// e^{2v} |dx/dt|^2 dt, with Simpson's rule on each segment. An upper bound for
/// the infimum over all paths.
inline double harnack_distance(const SurfaceTrajectory& traj, SpacetimePoint p1, SpacetimePoint p2,
                               PathGrid grid = {}) {
  require(p1.t < p2.t, "harnack_distance needs t1 < t2");
  require(grid.nodes >= 2 && grid.levels >= 1, "path grid too small");
  detail::check_point(traj, p1);
  detail::check_point(traj, p2);
  const auto& bg = *traj.background;
  const bool torus = bg.is_torus();
  const int M = grid.nodes, K = grid.levels;
  const double h = torus ? 2 * M_PI / M : M_PI / (M - 1);
  const double dt = (p2.t - p1.t) / K;
  auto E = [&](double x, double t) { return std::exp(2 * conformal_factor_at(traj, x, t)); };
  auto seg = [&](double xa, double ta, double xb, double disp) {
    const double mid = E(xa + 0.5 * disp, ta + 0.5 * dt);
    return disp * disp / dt * (E(xa, ta) + 4 * mid + E(xb, ta + dt)) / 6;
  };
  auto signed_disp = [&](double xa, double xb) {
    double d = xb - xa;
    return torus ? std::remainder(d, 2 * M_PI) : d;
  };
  if (K == 1) return seg(p1.x, p1.t, p2.x, signed_disp(p1.x, p2.x));

  const int half = torus ? 2 * M : 2 * M - 1;
  std::vector<Field> node_E(K + 1, Field(M)), half_E(K, Field(half));
  for (int k = 0; k < K; ++k) {
    const double t = p1.t + k * dt;
    for (int j = 0; j < M; ++j) node_E[k][j] = E(j * h, t);
    for (int j = 0; j < half; ++j) half_E[k][j] = E(0.5 * j * h, t + 0.5 * dt);
  }
  for (int j = 0; j < M; ++j) node_E[K][j] = E(j * h, p2.t);

  const double inf = std::numeric_limits<double>::infinity();
  Field cost(M), next(M);
  for (int j = 0; j < M; ++j) cost[j] = seg(p1.x, p1.t, j * h, signed_disp(p1.x, j * h));
  for (int k = 1; k + 1 < K; ++k) {
    std::fill(next.begin(), next.end(), inf);
    const auto& Ea = node_E[k];
    const auto& Eb = node_E[k + 1];
    const auto& Em = half_E[k];
    for (int i = 0; i < M; ++i) {
      const double base = cost[i];
      for (int j = 0; j < M; ++j) {
        int m = j - i;
        if (torus) m = m >= M / 2 ? m - M : (m < -M / 2 ? m + M : m);
        const int mid = torus ? ((2 * i + m) % (2 * M) + 2 * M) % (2 * M) : i + j;
        const double d = m * h;
        const double c = base + d * d / dt * (Ea[i] + 4 * Em[mid] + Eb[j]) / 6;
        if (c < next[j]) next[j] = c;
      }
    }
    std::swap(cost, next);
  }
  double best = inf;
  const double t_last = p1.t + (K - 1) * dt;
  for (int i = 0; i < M; ++i) best = std::min(best, cost[i] + seg(i * h, t_last, p2.x, signed_disp(i * h, p2.x)));
  return best;
}

/// Static bounds d^2 min E / (t2 - t1) and d^2 max E / (t2 - t1), with E = e^{2v}
/// ranging over the samples that bracket [t1, t2].
struct HarnackBounds {
  double lower = 0.0;
  double upper = 0.0;
};

inline HarnackBounds harnack_static_bounds(const SurfaceTrajectory& traj, SpacetimePoint p1, SpacetimePoint p2) {
  require(p1.t < p2.t, "harnack bounds need t1 < t2");
  const auto [k1, w1] = detail::bracket(traj.times, p1.t);
  const auto [k2, w2] = detail::bracket(traj.times, p2.t);
  const std::size_t hi = std::min(traj.size() - 1, w2 > 0 ? k2 + 1 : k2);
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (std::size_t k = k1; k <= hi; ++k) {
    const auto [lo, up] = std::minmax_element(traj.v[k].begin(), traj.v[k].end());
    vmin = std::min(vmin, *lo);
    vmax = std::max(vmax, *up);
  }
  (void)w1;
  const double d = detail::coordinate_distance(*traj.background, p1.x, p2.x);
  const double s = d * d / (p2.t - p1.t);
  return {s * std::exp(2 * vmin), s * std::exp(2 * vmax)};
}

struct HarnackPair {
  SpacetimePoint early;  // (xi, tau)
  SpacetimePoint late;   // (X, T)
};

struct HarnackReport {
  std::vector<double> slack;  // e^{D/4}(e^{rT}-1) R(X,T) - (e^{r tau}-1) R(xi,tau)
  std::vector<double> distance;
  double worst_slack = std::numeric_limits<double>::infinity();
  int violations = 0;
};

/// Evaluates the Harnack inequality on each pair. Times are measured from the
/// start of the flow (t = 0).
inline HarnackReport harnack_check(const SurfaceTrajectory& traj, const std::vector<HarnackPair>& pairs,
                                   double tol = 1e-8, PathGrid grid = {}) {
  require(!traj.diagnostics.empty(), "trajectory has no diagnostics");
  const double r = traj.diagnostics.front().r;
  if (!(r > 0)) throw Error(ErrorKind::Inapplicable, "Harnack check needs r > 0");
  for (const auto& p : pairs) {
    require(p.early.t < p.late.t, "Harnack pairs need tau < T");
    const auto [ka, wa] = detail::bracket(traj.times, p.early.t);
    const auto [kb, wb] = detail::bracket(traj.times, p.late.t);
    const std::size_t hi = std::min(traj.size() - 1, wb > 0 ? kb + 1 : kb);
    (void)wa;
    for (std::size_t k = ka; k <= hi; ++k)
      if (!(traj.diagnostics[k].Rmin > 0)) throw Error(ErrorKind::Inapplicable, "R is not positive on the span");
  }
  HarnackReport rep;
  rep.slack.resize(pairs.size());
  rep.distance.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& p = pairs[i];
    const double D = harnack_distance(traj, p.early, p.late, grid);
    const double lhs = std::expm1(r * p.early.t) * curvature_at(traj, p.early.x, p.early.t);
    const double rhs = std::exp(D / 4) * std::expm1(r * p.late.t) * curvature_at(traj, p.late.x, p.late.t);
    rep.distance[i] = D;
    rep.slack[i] = rhs - lhs;
  });
  for (double s : rep.slack) {
    rep.worst_slack = std::min(rep.worst_slack, s);
    if (s < -tol) ++rep.violations;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_snapshot_csv(std::ostream& os, const ConformalState& s) {
  const auto& bg = *s.background;
  const Field R = scalar_curvature(s);
  if (bg.is_torus()) {
    io::write_header(os, {"x", "y", "v", "R"});
    for (std::size_t i = 0; i < s.v.size(); ++i) {
      const auto [x, y] = bg.coordinates(i);
      io::write_row(os, {x, y, s.v[i], R[i]});
    }
  } else {
    io::write_header(os, {"theta", "v", "R"});
    for (std::size_t i = 0; i < s.v.size(); ++i) io::write_row(os, {bg.theta()[i], s.v[i], R[i]});
  }
}

inline void write_diagnostics_csv(std::ostream& os, const SurfaceTrajectory& traj) {
  io::write_header(os, {"t", "area", "r", "Rmin", "Rmax", "gauss_bonnet", "entropy", "M_norm", "I_osc"});
  for (const auto& d : traj.diagnostics) {
    const double ent = d.entropy ? *d.entropy : std::numeric_limits<double>::quiet_NaN();
    io::write_row(os, {d.t, d.area, d.r, d.Rmin, d.Rmax, d.gauss_bonnet, ent, d.M_norm, d.I_osc});
  }
}

}  // namespace ricci::surface
