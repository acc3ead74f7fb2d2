#pragma once

// Kahler-Ricci flow for the potential on flat complex tori of complex dimension
// one or two. Real axes are ordered (x1, y1, x2, y2), z_j = x_j + i y_j, each of
// period 2 pi. The evolving metric is g~_{jk} = g0_{jk} + d_j dbar_k u.
//
// Flow:   du/dt = log(det g~ / det g0) + f        (ricci_flat)
//         du/dt = log(det g~ / det g0) + f - u    (negative)

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ricci/error.hpp"
#include "ricci/io.hpp"
#include "ricci/parallel.hpp"
#include "ricci/spectral.hpp"

namespace ricci::kahler {

using Field = std::vector<double>;
using Cplx = std::complex<double>;
using HMat = Eigen::Matrix2cd;  // only the leading n_c x n_c block is used
using spectral::Spectrum;

enum class KahlerMode { RicciFlat, Negative };

inline const char* to_string(KahlerMode m) { return m == KahlerMode::RicciFlat ? "ricci_flat" : "negative"; }

class ComplexTorusGrid {
 public:
  ComplexTorusGrid(int n_c, int n) : n_c_(n_c), n_(n), real_(2 * n_c, n) {
    require(n_c == 1 || n_c == 2, "complex dimension must be 1 or 2");
    require(n % 2 == 0 && n >= (n_c == 1 ? 16 : 12), "grid size must be even and at least 16 (n_c=1) or 12 (n_c=2)");
    const std::size_t m = real_.spectrum_size();
    kappa_.resize(m);
    nyquist_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      nyquist_[j] = false;
      for (int a = 0; a < 2 * n_c_; ++a)
        if (std::abs(real_.wavenumber(j, a)) == n_ / 2) nyquist_[j] = true;
      for (int c = 0; c < n_c_; ++c)
        kappa_[j][c] = Cplx(real_.wavenumber(j, 2 * c), -static_cast<double>(real_.wavenumber(j, 2 * c + 1)));
    }
    // Multipliers of Re and Im of d_j dbar_k; mixed derivatives drop modes that are Nyquist on either axis.
    auto second = [&](std::size_t j, int a, int b) {
      const int ka = real_.wavenumber(j, a), kb = real_.wavenumber(j, b);
      if (a != b && (std::abs(ka) == n_ / 2 || std::abs(kb) == n_ / 2)) return 0.0;
      return -static_cast<double>(ka) * kb;
    };
    for (int j = 0; j < n_c_; ++j)
      for (int k = j; k < n_c_; ++k) {
        auto& re = hess_re_[pair_index(j, k)];
        auto& im = hess_im_[pair_index(j, k)];
        re.resize(m);
        im.resize(m);
        for (std::size_t q = 0; q < m; ++q) {
          re[q] = 0.25 * (second(q, 2 * j, 2 * k) + second(q, 2 * j + 1, 2 * k + 1));
          im[q] = 0.25 * (second(q, 2 * j, 2 * k + 1) - second(q, 2 * j + 1, 2 * k));
        }
      }
  }

  int n_c() const { return n_c_; }
  int n() const { return n_; }
  std::size_t size() const { return real_.size(); }
  const spectral::PeriodicGrid& real() const { return real_; }
  double spacing() const { return real_.spacing(); }

  /// kappa_j = a_j - i b_j, with (a_j, b_j) the wavenumbers along (x_j, y_j).
  const std::array<Cplx, 2>& kappa(std::size_t j) const { return kappa_[j]; }

  bool has_nyquist(std::size_t j) const { return nyquist_[j]; }

  /// Spectral multipliers of Re and Im of d_j dbar_k, j <= k.
  const std::vector<double>& hessian_re(int j, int k) const { return hess_re_[pair_index(j, k)]; }
  const std::vector<double>& hessian_im(int j, int k) const { return hess_im_[pair_index(j, k)]; }

 private:
  static int pair_index(int j, int k) { return j + k; }

  int n_c_;
  int n_;
  spectral::PeriodicGrid real_;
  std::vector<std::array<Cplx, 2>> kappa_;
  std::vector<bool> nyquist_;
  std::array<std::vector<double>, 3> hess_re_, hess_im_;
};

using GridPtr = std::shared_ptr<const ComplexTorusGrid>;

struct HermitianField {
  int n_c = 1;
  std::vector<HMat> m;

  std::size_t size() const { return m.size(); }
};

/// Complex field split into real and imaginary parts.
struct ComplexField {
  Field re, im;
};

namespace detail {

/// Applies the operator with symbol sigma(kappa) to a real field with spectrum s.
/// Modes touching a Nyquist frequency are dropped.
template <typename Sigma>
ComplexField apply_symbol(const ComplexTorusGrid& grid, const Spectrum& s, Sigma&& sigma) {
  Spectrum re(s.size()), im(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (grid.has_nyquist(j)) continue;
    auto k = grid.kappa(j);
    const Cplx sp = sigma(k);
    k[0] = -k[0];
    k[1] = -k[1];
    const Cplx sm = std::conj(sigma(k));
    re[j] = 0.5 * (sp + sm) * s[j];
    im[j] = Cplx(0, -0.5) * (sp - sm) * s[j];
  }
  return {grid.real().backward(std::move(re)), grid.real().backward(std::move(im))};
}

inline double det2(const HMat& h, int n) {
  if (n == 1) return h(0, 0).real();
  return (h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0)).real();
}

/// Inverse of the leading block.
inline HMat inverse2(const HMat& h, int n) {
  HMat out = HMat::Zero();
  if (n == 1) {
    out(0, 0) = 1.0 / h(0, 0).real();
    return out;
  }
  const double d = det2(h, 2);
  out(0, 0) = h(1, 1) / d;
  out(1, 1) = h(0, 0) / d;
  out(0, 1) = -h(0, 1) / d;
  out(1, 0) = -h(1, 0) / d;
  return out;
}

/// Smallest eigenvalue of the leading Hermitian block.
inline double min_eig(const HMat& h, int n) {
  if (n == 1) return h(0, 0).real();
  const double a = h(0, 0).real(), d = h(1, 1).real();
  return 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + std::norm(h(0, 1)));
}

inline double max_eig(const HMat& h, int n) {
  if (n == 1) return h(0, 0).real();
  const double a = h(0, 0).real(), d = h(1, 1).real();
  return 0.5 * (a + d) + std::sqrt(0.25 * (a - d) * (a - d) + std::norm(h(0, 1)));
}

/// Real trace of A B for the leading blocks.
inline double trace_product(const HMat& a, const HMat& b, int n) {
  Cplx t = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t += a(i, j) * b(j, i);
  return t.real();
}

}  // namespace detail

/// d_j dbar_k u = 1/4 [(u_{x_j x_k} + u_{y_j y_k}) + i (u_{x_j y_k} - u_{y_j x_k})].
inline HermitianField complex_hessian(const ComplexTorusGrid& grid, const Spectrum& s) {
  const int n = grid.n_c();
  const auto& g = grid.real();
  HermitianField out{n, std::vector<HMat>(grid.size(), HMat::Zero())};
  Spectrum buf(s.size());
  for (int j = 0; j < n; ++j) {
    for (int k = j; k < n; ++k) {
      const auto& mr = grid.hessian_re(j, k);
      for (std::size_t q = 0; q < s.size(); ++q) buf[q] = mr[q] * s[q];
      const Field fr = g.backward(buf);
      Field fi;
      if (j != k) {
        const auto& mi = grid.hessian_im(j, k);
        for (std::size_t q = 0; q < s.size(); ++q) buf[q] = mi[q] * s[q];
        fi = g.backward(buf);
      }
      for (std::size_t p = 0; p < grid.size(); ++p) {
        const double im = j == k ? 0.0 : fi[p];
        out.m[p](j, k) = Cplx(fr[p], im);
        out.m[p](k, j) = Cplx(fr[p], -im);
      }
    }
  }
  return out;
}

inline HermitianField complex_hessian(const ComplexTorusGrid& grid, const Field& u) {
  require(u.size() == grid.size(), "field does not match grid");
  return complex_hessian(grid, grid.real().forward(u));
}

/// Adds f + b with b = -log(mean e^f), so that the integral of e^f - 1 vanishes.
inline Field normalize_data(const Field& f) {
  require(!f.empty(), "empty data field");
  double m = 0.0;
  for (double x : f) m += std::exp(x);
  const double b = -std::log(m / static_cast<double>(f.size()));
  Field out(f);
  for (double& x : out) x += b;
  return out;
}

/// Limit of du/dt in ricci_flat mode: -log(mean e^{-f}).
inline double ricci_flat_constant(const Field& f) {
  double m = 0.0;
  for (double x : f) m += std::exp(-x);
  return -std::log(m / static_cast<double>(f.size()));
}

struct PotentialState {
  GridPtr grid;
  Field u;
  HMat g0 = HMat::Identity();
  Field f;  // normalized data
  double t = 0.0;
  KahlerMode mode = KahlerMode::RicciFlat;

  /// Validates g0, normalizes f and checks positivity of g0 + ddbar u0.
  static PotentialState make(GridPtr grid, const Eigen::MatrixXcd& g0, const Field& f_raw, Field u0, KahlerMode mode) {
    require(grid != nullptr, "missing grid");
    const int n = grid->n_c();
    require(g0.rows() == n && g0.cols() == n, "g0 must be n_c x n_c");
    require((g0 - g0.adjoint()).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, g0.cwiseAbs().maxCoeff()),
            "g0 must be Hermitian");
    HMat g = HMat::Identity();
    g.topLeftCorner(n, n) = g0;
    if (!(detail::min_eig(g, n) > 0)) throw Error(ErrorKind::DegenerateMetric, "g0 is not positive definite");
    require(f_raw.size() == grid->size(), "f does not match grid");
    if (u0.empty()) u0.assign(grid->size(), 0.0);
    require(u0.size() == grid->size(), "u0 does not match grid");
    for (double x : f_raw) require(std::isfinite(x), "f must be finite");
    for (double x : u0) require(std::isfinite(x), "u0 must be finite");
    PotentialState s{std::move(grid), std::move(u0), g, normalize_data(f_raw), 0.0, mode};
    check_positive(s);
    return s;
  }

 private:
  static void check_positive(const PotentialState& s);
};

/// Pointwise metric data for g~ = g0 + ddbar u.
struct MetricData {
  HermitianField hessian;
  Field log_ratio;            // log det g~ - log det g0
  std::vector<HMat> inverse;  // g~^{-1}
  double min_eig = 0.0;       // smallest eigenvalue of g~ over the grid
};

inline MetricData metric_data(const ComplexTorusGrid& grid, const HMat& g0, const Field& u) {
  const int n = grid.n_c();
  MetricData md;
  md.hessian = complex_hessian(grid, u);
  md.log_ratio.resize(grid.size());
  md.inverse.resize(grid.size());
  const double log_det0 = std::log(detail::det2(g0, n));
  md.min_eig = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const HMat gt = g0 + md.hessian.m[p];
    const double e = detail::min_eig(gt, n);
    if (e < md.min_eig) {
      md.min_eig = e;
      worst = p;
    }
    md.log_ratio[p] = std::log(detail::det2(gt, n)) - log_det0;
    md.inverse[p] = detail::inverse2(gt, n);
  }
  if (!(md.min_eig > 0))
    throw Error(ErrorKind::DegenerateMetric,
                "g0 + ddbar u is not positive definite at grid point " + std::to_string(worst));
  return md;
}

inline void PotentialState::check_positive(const PotentialState& s) { metric_data(*s.grid, s.g0, s.u); }

inline Field ma_log_ratio(const PotentialState& s) { return metric_data(*s.grid, s.g0, s.u).log_ratio; }

inline Field velocity_from(const MetricData& md, const Field& f, const Field& u, KahlerMode mode) {
  Field v(f.size());
  for (std::size_t p = 0; p < v.size(); ++p)
    v[p] = md.log_ratio[p] + f[p] - (mode == KahlerMode::Negative ? u[p] : 0.0);
  return v;
}

inline Field flow_velocity(const PotentialState& s) {
  return velocity_from(metric_data(*s.grid, s.g0, s.u), s.f, s.u, s.mode);
}

/// -ddbar log det g~ (g0 is constant, so log det g0 drops out).
inline HermitianField ricci_form(const ComplexTorusGrid& grid, const HMat& g0, const Field& u) {
  Field minus_log = metric_data(grid, g0, u).log_ratio;
  for (double& x : minus_log) x = -x;
  return complex_hessian(grid, minus_log);
}

inline HermitianField ricci_form(const PotentialState& s) { return ricci_form(*s.grid, s.g0, s.u); }

/// Target form Omega_{jk} = d_j dbar_k f.
inline HermitianField target_form(const PotentialState& s) { return complex_hessian(*s.grid, s.f); }

/// Sup-norm of Ric(g~) - Omega (ricci_flat) or Ric(g~) + (g~ - g0) - Omega (negative).
inline double ricci_form_residual(const PotentialState& s) {
  const auto ric = ricci_form(s);
  const auto omega = target_form(s);
  const auto hess = complex_hessian(*s.grid, s.u);
  const int n = s.grid->n_c();
  double worst = 0.0;
  for (std::size_t p = 0; p < ric.size(); ++p) {
    HMat d = ric.m[p] - omega.m[p];
    if (s.mode == KahlerMode::Negative) d += hess.m[p];
    worst = std::max(worst, d.topLeftCorner(n, n).cwiseAbs().maxCoeff());
  }
  return worst;
}

/// Integral of tr(g0^{-1} Ric) over the torus (a multiple of the first Chern number).
inline double chern_integral(const PotentialState& s) {
  const auto ric = ricci_form(s);
  const int n = s.grid->n_c();
  const HMat g0inv = detail::inverse2(s.g0, n);
  Field tr(ric.size());
  for (std::size_t p = 0; p < tr.size(); ++p) tr[p] = detail::trace_product(g0inv, ric.m[p], n);
  return s.grid->real().integrate(tr);
}

// ---------------------------------------------------------------------------
// Flow

struct KahlerFlowConfig {
  double t_end = 10.0;
  double output_interval = 0.1;
  double cfl = 0.4;         // dt = cfl * h^2 / (4 max lambda_max(g~^{-1}))
  double steady_tol = 0.0;  // stop once osc(du/dt) falls below this (0 disables)

  void validate() const {
    require(t_end > 0 && output_interval > 0, "t_end and output_interval must be positive");
    require(cfl > 0 && cfl <= 1, "cfl must lie in (0, 1]");
    require(steady_tol >= 0, "steady_tol must be nonnegative");
  }
};

struct KahlerMonitors {
  double t = 0.0;
  double max_dudt = 0.0;
  double osc = 0.0;           // max - min of du/dt
  double energy = 0.0;        // 1/2 integral of phi^2 dV~, phi = du/dt minus its dV~-mean
  double trace_min = 0.0;     // min of n + Delta u = tr(g0^{-1} g~)
  double equiv_lo = 0.0;      // min eigenvalue of g0^{-1} g~
  double equiv_hi = 0.0;      // max eigenvalue of g0^{-1} g~
  double l1_increment = 0.0;  // integral of |v(t) - v(t_prev)| dV, v = u - mean u
  double volume_identity = 0.0;  // relative gap between the two volume integrals
  double equiv_K() const { return std::max(equiv_hi, 1.0 / equiv_lo); }
};

struct KahlerTrajectory {
  GridPtr grid;
  HMat g0;
  Field f;
  KahlerMode mode = KahlerMode::RicciFlat;
  std::vector<double> times;
  std::vector<Field> u;
  std::vector<KahlerMonitors> monitors;
  bool stopped_steady = false;

  std::size_t size() const { return times.size(); }
  PotentialState state(std::size_t k) const { return PotentialState{grid, u[k], g0, f, times[k], mode}; }

  /// Mean-normalized potential v = u - mean(u).
  Field v(std::size_t k) const {
    Field out(u[k]);
    const double m = grid->real().mean(out);
    for (double& x : out) x -= m;
    return out;
  }
};

namespace detail {

inline KahlerMonitors monitors(const ComplexTorusGrid& grid, const HMat& g0, const Field& f, const Field& u,
                               KahlerMode mode, double t) {
  const int n = grid.n_c();
  const auto& rg = grid.real();
  const MetricData md = metric_data(grid, g0, u);
  const Field dudt = velocity_from(md, f, u, mode);
  KahlerMonitors m;
  m.t = t;
  const auto [lo, hi] = std::minmax_element(dudt.begin(), dudt.end());
  m.max_dudt = std::max(std::abs(*lo), std::abs(*hi));
  m.osc = *hi - *lo;
  const double det0 = det2(g0, n);
  Field ratio(u.size()), weighted(u.size()), expo(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) {
    ratio[p] = std::exp(md.log_ratio[p]);
    weighted[p] = dudt[p] * ratio[p];
    expo[p] = std::exp(dudt[p] - f[p] + (mode == KahlerMode::Negative ? u[p] : 0.0));
  }
  const double vol_t = rg.integrate(ratio) * det0;
  const double mean = rg.integrate(weighted) * det0 / vol_t;
  Field phi2(u.size());
  for (std::size_t p = 0; p < u.size(); ++p) phi2[p] = (dudt[p] - mean) * (dudt[p] - mean) * ratio[p];
  m.energy = 0.5 * rg.integrate(phi2) * det0;
  m.volume_identity = std::abs(rg.integrate(expo) * det0 - vol_t) / vol_t;
  // Eigenvalues of g0^{-1} g~ via the Cholesky factor of g0.
  Eigen::LLT<Eigen::MatrixXcd> llt(g0.topLeftCorner(n, n));
  const Eigen::MatrixXcd Linv = llt.matrixL().solve(Eigen::MatrixXcd::Identity(n, n));
  const HMat g0inv = inverse2(g0, n);
  m.trace_min = std::numeric_limits<double>::infinity();
  m.equiv_lo = std::numeric_limits<double>::infinity();
  m.equiv_hi = 0.0;
  for (std::size_t p = 0; p < u.size(); ++p) {
    const HMat gt = g0 + md.hessian.m[p];
    m.trace_min = std::min(m.trace_min, trace_product(g0inv, gt, n));
    HMat s = HMat::Identity();
    s.topLeftCorner(n, n) = Linv * gt.topLeftCorner(n, n) * Linv.adjoint();
    m.equiv_lo = std::min(m.equiv_lo, min_eig(s, n));
    m.equiv_hi = std::max(m.equiv_hi, max_eig(s, n));
  }
  return m;
}

}  // namespace detail

namespace detail {

/// Allocation-free evaluation of du/dt for the time stepper.
class VelocityWorkspace {
 public:
  VelocityWorkspace(const ComplexTorusGrid& grid, const HMat& g0, const Field& f, KahlerMode mode)
      : grid_(grid), g0_(g0), f_(f), mode_(mode), spec_(grid.real().spectrum_size()), buf_(spec_.size()) {
    const int n = grid.n_c();
    for (auto& h : parts_) h.resize(grid.size());
    log_det0_ = std::log(det2(g0, n));
  }

  /// Writes du/dt into `out` and returns the smallest eigenvalue of g~ over the grid.
  double operator()(const Field& u, Field& out) {
    const int n = grid_.n_c();
    spec_ = grid_.real().forward(u);
    // parts: [Re H00, Re H11, Re H01, Im H01]
    transform(0, grid_.hessian_re(0, 0));
    if (n == 2) {
      transform(1, grid_.hessian_re(1, 1));
      transform(2, grid_.hessian_re(0, 1));
      transform(3, grid_.hessian_im(0, 1));
    }
    double lo = std::numeric_limits<double>::infinity();
    std::size_t worst = 0;
    const double a0 = g0_(0, 0).real();
    for (std::size_t p = 0; p < u.size(); ++p) {
      double det, e;
      if (n == 1) {
        det = a0 + parts_[0][p];
        e = det;
      } else {
        const double a = a0 + parts_[0][p], d = g0_(1, 1).real() + parts_[1][p];
        const Cplx b = g0_(0, 1) + Cplx(parts_[2][p], parts_[3][p]);
        det = a * d - std::norm(b);
        e = 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + std::norm(b));
      }
      if (e < lo) {
        lo = e;
        worst = p;
      }
      out[p] = std::log(det) - log_det0_ + f_[p] - (mode_ == KahlerMode::Negative ? u[p] : 0.0);
    }
    if (!(lo > 0))
      throw Error(ErrorKind::DegenerateMetric,
                  "g0 + ddbar u is not positive definite at grid point " + std::to_string(worst));
    return lo;
  }

 private:
  void transform(int slot, const std::vector<double>& mult) {
    for (std::size_t q = 0; q < spec_.size(); ++q) buf_[q] = mult[q] * spec_[q];
    parts_[slot] = grid_.real().backward(buf_);
  }

  const ComplexTorusGrid& grid_;
  HMat g0_;
  const Field& f_;
  KahlerMode mode_;
  Spectrum spec_, buf_;
  std::array<Field, 4> parts_;
  double log_det0_ = 0.0;
};

}  // namespace detail

inline KahlerTrajectory evolve(const PotentialState& s0, const KahlerFlowConfig& cfg) {
  cfg.validate();
  const auto& grid = *s0.grid;
  KahlerTrajectory traj{s0.grid, s0.g0, s0.f, s0.mode, {s0.t}, {s0.u}, {}, false};
  Field u = s0.u, tmp(u.size()), k1(u.size()), k2(u.size()), k3(u.size()), k4(u.size());
  detail::VelocityWorkspace vel(grid, s0.g0, s0.f, s0.mode);
  const double h = grid.spacing();
  auto axpy = [&](const Field& a, double c, const Field& b) -> const Field& {
    for (std::size_t i = 0; i < a.size(); ++i) tmp[i] = a[i] + c * b[i];
    return tmp;
  };
  const std::size_t n_out = static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.output_interval - 1e-9));
  for (std::size_t k = 1; k <= n_out; ++k) {
    const double t_prev = traj.times.back();
    const double t_next = s0.t + std::min(cfg.t_end, static_cast<double>(k) * cfg.output_interval);
    double t = t_prev;
    try {
      while (t < t_next) {
        // dt = cfl h^2 / (4 max lambda_max(g~^{-1})), and lambda_max(g~^{-1}) = 1 / lambda_min(g~).
        const double lmin = vel(u, k1);
        const double dt = std::min(cfg.cfl * h * h * lmin / 4.0, t_next - t);
        vel(axpy(u, 0.5 * dt, k1), k2);
        vel(axpy(u, 0.5 * dt, k2), k3);
        vel(axpy(u, dt, k3), k4);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        t = (t_next - t <= dt) ? t_next : t + dt;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateMetric) throw;
      throw NumericalFailure<PotentialState>(std::string("positivity lost: ") + e.what(),
                                             PotentialState{s0.grid, u, s0.g0, s0.f, t, s0.mode}, t);
    }
    traj.times.push_back(t_next);
    traj.u.push_back(u);
    if (cfg.steady_tol > 0) {
      vel(u, k1);
      const auto [lo, hi] = std::minmax_element(k1.begin(), k1.end());
      if (*hi - *lo <= cfg.steady_tol) {
        traj.stopped_steady = true;
        break;
      }
    }
  }

  traj.monitors.resize(traj.size());
  parallel_for(traj.size(), [&](std::size_t k) {
    traj.monitors[k] = detail::monitors(grid, traj.g0, traj.f, traj.u[k], traj.mode, traj.times[k]);
  });
  const double det0 = detail::det2(traj.g0, grid.n_c());
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const Field a = traj.v(k), b = traj.v(k - 1);
    Field d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
    traj.monitors[k].l1_increment = grid.real().integrate(d) * det0;
  }
  return traj;
}

inline const std::vector<KahlerMonitors>& convergence_monitors(const KahlerTrajectory& traj) {
  require(traj.size() >= 3, "monitors need at least three samples");
  return traj.monitors;
}

// ---------------------------------------------------------------------------
// Newton oracle for the stationary equation of the flow:
//   ricci_flat:  det g~ / det g0 = exp(c - f), c = -log(mean e^{-f}), mean(u) = 0
//   negative:    det g~ / det g0 = exp(u - f)

namespace detail {

/// Linearisation J d = D tr(g~^{-1} ddbar d) + shift d (+ mean(d) in ricci_flat mode,
/// which removes the constant kernel).
class NewtonOperator;

}  // namespace detail

}  // namespace ricci::kahler

namespace Eigen::internal {
template <>
struct traits<ricci::kahler::detail::NewtonOperator> : public traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace ricci::kahler::detail {

class NewtonOperator : public Eigen::EigenBase<NewtonOperator> {
 public:
  using Scalar = double;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  NewtonOperator(const ComplexTorusGrid& grid, const std::vector<HMat>& inverse, const Field& ratio,
                 const Field& shift, bool add_mean)
      : grid_(&grid), inverse_(&inverse), ratio_(&ratio), shift_(&shift), add_mean_(add_mean) {}

  Eigen::Index rows() const { return static_cast<Eigen::Index>(grid_->size()); }
  Eigen::Index cols() const { return rows(); }

  template <typename Rhs>
  Eigen::Product<NewtonOperator, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<NewtonOperator, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }

  Field apply(const Field& d) const {
    const int n = grid_->n_c();
    const auto hess = complex_hessian(*grid_, d);
    const double mean = add_mean_ ? grid_->real().mean(d) : 0.0;
    Field out(d.size());
    for (std::size_t p = 0; p < d.size(); ++p)
      out[p] = (*ratio_)[p] * trace_product((*inverse_)[p], hess.m[p], n) - (*shift_)[p] * d[p] + mean;
    return out;
  }

  const ComplexTorusGrid& grid() const { return *grid_; }

  /// Constant-coefficient model used by the preconditioner: mean of D g~^{-1} and of the shift.
  HMat mean_coefficient() const {
    HMat a = HMat::Zero();
    for (std::size_t p = 0; p < grid_->size(); ++p) a += (*ratio_)[p] * (*inverse_)[p];
    return a / static_cast<double>(grid_->size());
  }
  double mean_shift() const { return grid_->real().mean(*shift_); }
  bool add_mean() const { return add_mean_; }

 private:
  const ComplexTorusGrid* grid_;
  const std::vector<HMat>* inverse_;
  const Field* ratio_;
  const Field* shift_;
  bool add_mean_;
};

/// Spectral inverse of the constant-coefficient model operator.
class SpectralPreconditioner {
 public:
  using Scalar = double;
  SpectralPreconditioner() = default;
  template <typename M>
  explicit SpectralPreconditioner(const M& m) {
    compute(m);
  }
  template <typename M>
  SpectralPreconditioner& analyzePattern(const M&) {
    return *this;
  }
  template <typename M>
  SpectralPreconditioner& factorize(const M& m) {
    return compute(m);
  }
  SpectralPreconditioner& compute(const NewtonOperator& op) {
    grid_ = &op.grid();
    const int n = grid_->n_c();
    const HMat a = op.mean_coefficient();
    const double shift = op.mean_shift();
    symbol_.assign(grid_->real().spectrum_size(), 0.0);
    for (std::size_t j = 0; j < symbol_.size(); ++j) {
      const auto k = grid_->kappa(j);
      Cplx q = 0;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) q += std::conj(k[r]) * a(r, c) * k[c];
      double s = -0.25 * q.real() - shift;
      if (j == 0 && op.add_mean()) s += 1.0;
      symbol_[j] = s == 0.0 ? 1.0 : s;
    }
    return *this;
  }
  template <typename Rhs>
  Eigen::VectorXd solve(const Eigen::MatrixBase<Rhs>& b) const {
    Field in(b.size());
    for (Eigen::Index i = 0; i < b.size(); ++i) in[i] = b[i];
    auto s = grid_->real().forward(in);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] /= symbol_[j];
    const Field out = grid_->real().backward(std::move(s));
    return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
  }
  Eigen::ComputationInfo info() { return Eigen::Success; }

 private:
  const ComplexTorusGrid* grid_ = nullptr;
  std::vector<double> symbol_;
};

}  // namespace ricci::kahler::detail

namespace Eigen::internal {
template <typename Rhs>
struct generic_product_impl<ricci::kahler::detail::NewtonOperator, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<ricci::kahler::detail::NewtonOperator, Rhs,
                                generic_product_impl<ricci::kahler::detail::NewtonOperator, Rhs>> {
  using Scalar = typename Product<ricci::kahler::detail::NewtonOperator, Rhs>::Scalar;
  template <typename Dest>
  static void scaleAndAddTo(Dest& dst, const ricci::kahler::detail::NewtonOperator& lhs, const Rhs& rhs,
                            const Scalar& alpha) {
    ricci::kahler::Field in(rhs.size());
    for (Index i = 0; i < rhs.size(); ++i) in[i] = rhs(i);
    const auto out = lhs.apply(in);
    for (Index i = 0; i < rhs.size(); ++i) dst(i) += alpha * out[i];
  }
};
}  // namespace Eigen::internal

namespace ricci::kahler {

struct NewtonConfig {
  double tol = 1e-11;       // sup-norm of the log-form residual
  int max_iterations = 50;
  double linear_tol = 1e-13;
  double min_step = 1.0 / 1024;
};

struct NewtonResult {
  Field u;
  double residual = 0.0;
  int iterations = 0;
  double c = 0.0;  // du/dt at the fixed point in ricci_flat mode
};

/// f must already be normalized. `initial` defaults to u = 0.
inline NewtonResult stationary_newton(const GridPtr& grid_ptr, const HMat& g0, const Field& f, KahlerMode mode,
                                      std::optional<Field> initial = {}, NewtonConfig cfg = {}) {
  const auto& grid = *grid_ptr;
  require(f.size() == grid.size(), "f does not match grid");
  Field u = initial ? *initial : Field(grid.size(), 0.0);
  require(u.size() == grid.size(), "initial guess does not match grid");
  const bool flat = mode == KahlerMode::RicciFlat;
  NewtonResult res;
  res.c = flat ? ricci_flat_constant(f) : 0.0;
  auto center = [&](Field& w) {
    if (!flat) return;
    const double m = grid.real().mean(w);
    for (double& x : w) x -= m;
  };
  center(u);

  struct Eval {
    MetricData md;
    Field ratio, target, G;
    double log_res = 0.0, g_norm = 0.0;
  };
  auto evaluate = [&](const Field& w) {
    Eval e{metric_data(grid, g0, w), {}, {}, {}, 0.0, 0.0};
    e.ratio.resize(w.size());
    e.target.resize(w.size());
    e.G.resize(w.size());
    for (std::size_t p = 0; p < w.size(); ++p) {
      const double expo = flat ? res.c - f[p] : w[p] - f[p];
      e.ratio[p] = std::exp(e.md.log_ratio[p]);
      e.target[p] = std::exp(expo);
      e.G[p] = e.ratio[p] - e.target[p];
      e.log_res = std::max(e.log_res, std::abs(e.md.log_ratio[p] - expo));
      e.g_norm += e.G[p] * e.G[p];
    }
    e.g_norm = std::sqrt(e.g_norm / static_cast<double>(w.size()));
    return e;
  };

  Eval cur = evaluate(u);
  for (res.iterations = 0; res.iterations < cfg.max_iterations; ++res.iterations) {
    if (cur.log_res <= cfg.tol) break;
    const Field shift = flat ? Field(u.size(), 0.0) : cur.target;
    detail::NewtonOperator op(grid, cur.md.inverse, cur.ratio, shift, flat);
    Eigen::BiCGSTAB<detail::NewtonOperator, detail::SpectralPreconditioner> solver;
    solver.setTolerance(cfg.linear_tol);
    solver.setMaxIterations(500);
    solver.compute(op);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(u.size()));
    for (std::size_t p = 0; p < u.size(); ++p) rhs[static_cast<Eigen::Index>(p)] = -cur.G[p];
    const Eigen::VectorXd delta = solver.solve(rhs);
    if (!delta.allFinite()) throw Error(ErrorKind::NoConvergence, "linear solve failed in Newton iteration");

    double step = 1.0;
    bool accepted = false;
    while (step >= cfg.min_step) {
      Field trial(u);
      for (std::size_t p = 0; p < u.size(); ++p) trial[p] += step * delta[static_cast<Eigen::Index>(p)];
      center(trial);
      try {
        Eval next = evaluate(trial);
        if (next.g_norm < cur.g_norm || next.log_res <= cfg.tol) {
          u = std::move(trial);
          cur = std::move(next);
          accepted = true;
          break;
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateMetric) throw;
      }
      step *= 0.5;
    }
    if (!accepted) throw Error(ErrorKind::NoConvergence, "Newton line search reached its floor");
  }
  if (cur.log_res > cfg.tol) throw Error(ErrorKind::NoConvergence, "Newton iteration limit reached");
  res.u = std::move(u);
  res.residual = cur.log_res;
  return res;
}

// ---------------------------------------------------------------------------
// Curvature identity: g^{ij} R_{ijkl} = -d_k dbar_l log det g, with
// R_{ijkl} = -d_i dbar_j g_{kl} + g^{uv} d_i g_{kv} dbar_j g_{ul} (bars on j, l, v).

struct CurvatureIdentityReport {
  double discrepancy = 0.0;  // sup over points and entries
  double scale = 0.0;        // sup of the Ricci entries
};

inline CurvatureIdentityReport curvature_identity_check(const ComplexTorusGrid& grid, const HMat& g0,
                                                        const Field& phi) {
  const int n = grid.n_c();
  const auto& rg = grid.real();
  const MetricData md = metric_data(grid, g0, phi);
  const Spectrum s = rg.forward(phi);
  const std::size_t P = grid.size();
  auto idx3 = [](int a, int b, int c) { return (a * 2 + b) * 2 + c; };
  auto idx4 = [](int a, int b, int c, int d) { return ((a * 2 + b) * 2 + c) * 2 + d; };
  // d_i d_k dbar_l phi, symbol (i/2)^3 kappa_i kappa_k conj(kappa_l).
  std::vector<ComplexField> d3(8);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l)
        d3[idx3(i, k, l)] = detail::apply_symbol(grid, s, [&](const std::array<Cplx, 2>& q) {
          return Cplx(0, -0.125) * q[i] * q[k] * std::conj(q[l]);
        });
  // d_i dbar_j d_k dbar_l phi, symbol (1/16) kappa_i conj(kappa_j) kappa_k conj(kappa_l).
  std::vector<ComplexField> d4(16);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          d4[idx4(i, j, k, l)] = detail::apply_symbol(grid, s, [&](const std::array<Cplx, 2>& q) {
            return 0.0625 * q[i] * std::conj(q[j]) * q[k] * std::conj(q[l]);
          });
  // Route A: -ddbar log det g.
  Field minus_log(md.log_ratio);
  for (double& x : minus_log) x = -x;
  const auto route_a = complex_hessian(grid, minus_log);

  CurvatureIdentityReport rep;
  for (std::size_t p = 0; p < P; ++p) {
    auto at3 = [&](int a, int b, int c) { return Cplx(d3[idx3(a, b, c)].re[p], d3[idx3(a, b, c)].im[p]); };
    auto at4 = [&](int a, int b, int c, int d) {
      return Cplx(d4[idx4(a, b, c, d)].re[p], d4[idx4(a, b, c, d)].im[p]);
    };
    const HMat& ginv = md.inverse[p];  // ginv(a, b) = (G^{-1})_{ab}; g^{i jbar} = ginv(j, i)
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        Cplx ric = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            Cplx r = -at4(i, j, k, l);
            for (int u = 0; u < n; ++u)
              for (int v = 0; v < n; ++v) {
                // dbar_j g_{u lbar} = conj(d_j g_{l ubar}) for real phi.
                r += ginv(v, u) * at3(i, k, v) * std::conj(at3(j, l, u));
              }
            ric += ginv(j, i) * r;
          }
        rep.discrepancy = std::max(rep.discrepancy, std::abs(ric - route_a.m[p](k, l)));
        rep.scale = std::max(rep.scale, std::abs(route_a.m[p](k, l)));
      }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_monitors_csv(std::ostream& os, const KahlerTrajectory& traj) {
  io::write_header(os, {"t", "max_dudt", "osc", "E", "trace_min", "equiv_K"});
  for (const auto& m : traj.monitors) io::write_row(os, {m.t, m.max_dudt, m.osc, m.energy, m.trace_min, m.equiv_K()});
}

inline void write_potential_csv(std::ostream& os, const ComplexTorusGrid& grid, const Field& u) {
  const int d = 2 * grid.n_c();
  if (d == 2)
    io::write_header(os, {"x1", "y1", "u"});
  else
    io::write_header(os, {"x1", "y1", "x2", "y2", "u"});
  std::vector<double> row(d + 1);
  for (std::size_t p = 0; p < u.size(); ++p) {
    for (int a = 0; a < d; ++a) row[a] = grid.real().coordinate(p, a);
    row[d] = u[p];
    io::write_row(os, row);
  }
}

}  // namespace ricci::kahler
