#pragma once

// Scalar comparison solutions for dR/dt = R (R - r) and the eigenvalue algebra of
// the Ricci tensor in dimension three.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ricci/error.hpp"
#include "ricci/flow.hpp"
#include "ricci/homogeneous.hpp"
#include "ricci/io.hpp"
#include "ricci/parallel.hpp"
#include "ricci/random.hpp"

namespace ricci::maxp {

/// Solution of phi' = phi (phi - r), phi(0) = c0.
struct ComparisonSolution {
  double r = 0.0;
  double c0 = 0.0;
  std::optional<double> blow_up_time;

  double operator()(double t) const {
    if (r == 0.0) return c0 / (1.0 - c0 * t);
    return r * c0 / (c0 - (c0 - r) * std::exp(r * t));
  }

  /// Right-hand side of the ODE, for checking the closed form.
  double rate(double phi) const { return phi * (phi - r); }

  bool defined_at(double t) const { return !blow_up_time || t < *blow_up_time; }
};

inline ComparisonSolution logistic_comparison(double r, double c0) {
  ComparisonSolution s{r, c0, std::nullopt};
  if (r == 0.0) {
    if (c0 > 0) s.blow_up_time = 1.0 / c0;
  } else if (c0 != 0.0 && c0 != r) {
    // c0 = (c0 - r) e^{rt}
    const double q = c0 / (c0 - r);
    if (q > 0) {
      const double t = std::log(q) / r;
      if (t > 0) s.blow_up_time = t;
    }
  }
  return s;
}

enum class BoundDirection { Lower, Upper };

struct ScalarBoundReport {
  double worst_violation = 0.0;  // signed: negative is bad for lower, positive for upper
  int violations = 0;
  std::size_t samples_checked = 0;
  bool truncated = false;        // comparison blew up inside the span
  double scale = 1.0;
  bool pass = true;
};

/// Compares a per-sample extremum series with a comparison solution started at
/// series[0]. Samples at or past the blow-up time are skipped and flagged.
inline ScalarBoundReport verify_scalar_bound(const std::vector<double>& times, const std::vector<double>& series,
                                             const ComparisonSolution& phi, BoundDirection dir, double tol = 1e-8) {
  require(times.size() == series.size() && !times.empty(), "times and series must have equal nonzero length");
  ScalarBoundReport rep;
  double scale = 1.0;
  for (double x : series) scale = std::max(scale, std::abs(x));
  rep.scale = scale;
  const double t0 = times.front();
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k] - t0;
    if (!phi.defined_at(t)) {
      rep.truncated = true;
      break;
    }
    const double diff = series[k] - phi(t);
    ++rep.samples_checked;
    if (dir == BoundDirection::Lower) {
      rep.worst_violation = std::min(rep.worst_violation, diff);
      if (diff < -tol * scale) ++rep.violations;
    } else {
      rep.worst_violation = std::max(rep.worst_violation, diff);
      if (diff > tol * scale) ++rep.violations;
    }
  }
  rep.pass = rep.violations == 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Eigenvalue algebra

struct EigenTriple {
  double lam, mu, nu;  // lam >= mu >= nu

  static EigenTriple make(double a, double b, double c) {
    std::array<double, 3> v{a, b, c};
    std::sort(v.begin(), v.end(), std::greater<>());
    return {v[0], v[1], v[2]};
  }

  double scale() const { return std::max({std::abs(lam), std::abs(mu), std::abs(nu)}); }
};

struct EigenInvariants {
  double R, S, T, C, P;
  std::array<double, 3> Q;
};

inline EigenInvariants eigen_invariants(const EigenTriple& e) {
  EigenInvariants o;
  const std::array<double, 3> l{e.lam, e.mu, e.nu};
  o.R = l[0] + l[1] + l[2];
  o.S = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  o.T = l[0] * l[0] * l[0] + l[1] * l[1] * l[1] + l[2] * l[2] * l[2];
  o.C = 0.5 * (o.R * o.R * o.R - 5 * o.R * o.S + 6 * o.T);
  o.P = o.S * o.S + o.R * (o.C - o.T);
  for (int i = 0; i < 3; ++i) o.Q[i] = 3 * o.R * l[i] - 6 * l[i] * l[i] + 2 * o.S - o.R * o.R;
  return o;
}

/// lam^2 (lam - mu)(lam - nu) + mu^2 (mu - lam)(mu - nu) + nu^2 (nu - lam)(nu - mu).
inline double p_factored(double l, double m, double n) {
  return l * l * (l - m) * (l - n) + m * m * (m - l) * (m - n) + n * n * (n - l) * (n - m);
}

/// S - R^2/3 written through the eigenvalue gaps, which avoids cancellation.
inline double trace_free_norm_sq(double l, double m, double n) {
  return ((l - m) * (l - m) + (m - n) * (m - n) + (n - l) * (n - l)) / 3.0;
}

/// R [lam (mu + nu) + (mu - nu)^2] - 2 lam S, for the eigenvalue lam carrying the null vector.
inline double null_vector_expression(double l, double m, double n) {
  const double R = l + m + n, S = l * l + m * m + n * n;
  return R * (l * (m + n) + (m - n) * (m - n)) - 2 * l * S;
}

struct CheckReport {
  std::string check;
  std::size_t samples = 0;
  std::size_t rejected = 0;
  std::size_t violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();  // smallest normalised slack
  bool pass() const { return violations == 0; }
};

namespace detail {

struct SampleOutcome {
  double slack = 0.0;
  double tol = 0.0;
  bool accepted = true;
};

/// Runs one(i) over n samples in parallel and reduces in index order.
template <typename One>
CheckReport run_check(std::string name, std::size_t n, One&& one) {
  std::vector<SampleOutcome> items(n);
  parallel_for(n, [&](std::size_t i) { items[i] = one(i); });
  CheckReport rep;
  rep.check = std::move(name);
  for (const auto& it : items) {
    if (!it.accepted) {
      ++rep.rejected;
      continue;
    }
    ++rep.samples;
    rep.worst_slack = std::min(rep.worst_slack, it.tol > 0 ? it.slack / it.tol : it.slack);
    if (it.slack < -it.tol) ++rep.violations;
  }
  return rep;
}

inline double pow_scale(const EigenTriple& e, int k) { return std::pow(std::max(e.scale(), 1e-300), k); }

}  // namespace detail

/// Brute-force equivalence of S^2 + R(C - T) with the factored quartic. Slack is
/// the tolerance 1e-9 scale^4 minus the discrepancy; worst_slack is reported in
/// units of that tolerance.
inline CheckReport p_identity_check(const std::vector<EigenTriple>& samples) {
  return detail::run_check("p_identity", samples.size(), [&](std::size_t i) {
    const auto& e = samples[i];
    const double tol = 1e-9 * detail::pow_scale(e, 4);
    const double diff = std::abs(eigen_invariants(e).P - p_factored(e.lam, e.mu, e.nu));
    return detail::SampleOutcome{tol - diff, 0.0, true};
  });
}

/// P >= eps^2 S (S - R^2/3) on samples with R > 0 and nu >= eps R.
inline CheckReport p_lower_bound_check(const std::vector<EigenTriple>& samples, double eps) {
  require(eps > 0 && eps <= 1.0 / 3.0, "eps must lie in (0, 1/3]");
  return detail::run_check("p_lower_bound", samples.size(), [&](std::size_t i) {
    const auto& e = samples[i];
    const auto inv = eigen_invariants(e);
    if (!(inv.R > 0) || e.nu < eps * inv.R) return detail::SampleOutcome{0, 0, false};
    const double rhs = eps * eps * inv.S * trace_free_norm_sq(e.lam, e.mu, e.nu);
    return detail::SampleOutcome{p_factored(e.lam, e.mu, e.nu) - rhs, 1e-12 * detail::pow_scale(e, 4), true};
  });
}

/// Samples are (lam, mu, nu) with lam = eps R the eigenvalue of the null vector.
struct NullVectorSample {
  double lam, mu, nu;
};

inline CheckReport null_vector_condition_check(const std::vector<NullVectorSample>& samples, double eps) {
  require(eps > 0 && eps <= 1.0 / 3.0, "eps must lie in (0, 1/3]");
  return detail::run_check("null_vector", samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    const double R = s.lam + s.mu + s.nu;
    const double scale = std::max({std::abs(s.lam), std::abs(s.mu), std::abs(s.nu), 1e-300});
    const bool ok = R > 0 && s.lam > 0 && s.mu > 0 && s.nu > 0 && std::abs(s.lam - eps * R) <= 1e-12 * scale &&
                    s.mu + s.nu >= 2 * s.lam;
    if (!ok) return detail::SampleOutcome{0, 0, false};
    return detail::SampleOutcome{null_vector_expression(s.lam, s.mu, s.nu), 1e-12 * std::pow(scale, 3), true};
  });
}

// ---------------------------------------------------------------------------
// Sample generators (rejection from a box scaled to the constraint set)

inline std::vector<EigenTriple> uniform_triples(std::size_t n, double half_width, std::uint64_t seed) {
  std::vector<EigenTriple> out(n);
  parallel_for(n, [&](std::size_t i) {
    rng::Stream s(seed, i);
    const double a = s.uniform(-half_width, half_width), b = s.uniform(-half_width, half_width),
                 c = s.uniform(-half_width, half_width);
    out[i] = EigenTriple::make(a, b, c);
  });
  return out;
}

/// Triples with R > 0 and nu >= eps R. nu is drawn first; lam and mu come from
/// [nu, nu (1 - 2 eps) / eps], rejecting draws with lam + mu > nu (1 - eps) / eps.
inline std::vector<EigenTriple> pinched_triples(std::size_t n, double eps, std::uint64_t seed) {
  require(eps > 0 && eps <= 1.0 / 3.0, "eps must lie in (0, 1/3]");
  std::vector<EigenTriple> out(n);
  parallel_for(n, [&](std::size_t i) {
    rng::Stream s(seed, i);
    const double nu = s.log_uniform(1e-3, 1e3);
    const double top = nu * (1 - 2 * eps) / eps, sum_cap = nu * (1 - eps) / eps;
    for (;;) {
      const double a = s.uniform(nu, top), b = s.uniform(nu, top);
      if (a + b <= sum_cap) {
        out[i] = EigenTriple::make(a, b, nu);
        return;
      }
    }
  });
  return out;
}

/// mu, nu uniform in (0, scale], lam = eps (mu + nu) / (1 - eps) so that lam = eps R.
inline std::vector<NullVectorSample> null_vector_samples(std::size_t n, double eps, std::uint64_t seed) {
  std::vector<NullVectorSample> out(n);
  parallel_for(n, [&](std::size_t i) {
    rng::Stream s(seed, i);
    const double scale = s.log_uniform(1e-3, 1e3);
    const double mu = scale * (1.0 - s.uniform()), nu = scale * (1.0 - s.uniform());
    out[i] = {eps * (mu + nu) / (1.0 - eps), mu, nu};
  });
  return out;
}

inline void write_reports_csv(std::ostream& os, const std::vector<CheckReport>& reps) {
  io::write_header(os, {"check", "samples", "violations", "worst_slack"});
  for (const auto& r : reps)
    os << r.check << ',' << r.samples << ',' << r.violations << ',' << io::format_double(r.worst_slack) << '\n';
}

// ---------------------------------------------------------------------------
// Pinching along homogeneous trajectories

/// Mixed-form Ricci eigenvalues Ric(F_i, F_i) / g_ii.
inline EigenTriple ricci_eigenvalues(const homogeneous::MilnorSignature& sig, const homogeneous::DiagonalMetric& g) {
  const auto ric = homogeneous::ricci_diagonal(sig, g).ricci;
  return EigenTriple::make(ric[0] / g.A, ric[1] / g.B, ric[2] / g.C);
}

struct PinchingSeries {
  double delta = 0.0;
  double eps0 = 0.0;
  std::vector<double> times;
  std::vector<double> value;  // (S - R^2/3) / R^{2 - delta}
  double initial() const { return value.front(); }
  double max() const { return *std::max_element(value.begin(), value.end()); }
  bool pass() const { return max() <= initial() * (1 + 1e-6); }
};

inline PinchingSeries pinching_monitor(const homogeneous::FlowTrajectory& traj, std::optional<double> delta = {}) {
  require(traj.size() > 0, "empty trajectory");
  PinchingSeries out;
  const auto e0 = ricci_eigenvalues(traj.sig, traj.states.front());
  const double R0 = e0.lam + e0.mu + e0.nu;
  if (!(R0 > 0)) throw Error(ErrorKind::Inapplicable, "pinching needs R > 0");
  out.eps0 = e0.nu / R0;
  out.delta = delta ? *delta : std::min(2 * out.eps0 * out.eps0, 1.0);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto e = ricci_eigenvalues(traj.sig, traj.states[k]);
    const double R = e.lam + e.mu + e.nu;
    if (!(R > 0)) throw Error(ErrorKind::Inapplicable, "R is not positive along the trajectory");
    out.times.push_back(traj.times[k]);
    out.value.push_back(trace_free_norm_sq(e.lam, e.mu, e.nu) / std::pow(R, 2 - out.delta));
  }
  return out;
}

}  // namespace ricci::maxp
