#pragma once

// Dormand-Prince 5(4) embedded Runge-Kutta pair with a PI step-size controller.

#include <algorithm>
#include <cmath>

namespace ricci::ode {

template <typename Vec>
struct DormandPrince {
  // Butcher tableau (Hairer, Norsett & Wanner, Table 5.2).
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  /// One step of size h from (t, y). Returns the fifth-order solution in y_out and
  /// the embedded error vector in err.
  template <typename F>
  static void step(F&& f, double t, const Vec& y, double h, Vec& y_out, Vec& err) {
    const Vec k1 = f(t, y);
    const Vec k2 = f(t + c2 * h, Vec(y + h * (a21 * k1)));
    const Vec k3 = f(t + c3 * h, Vec(y + h * (a31 * k1 + a32 * k2)));
    const Vec k4 = f(t + c4 * h, Vec(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const Vec k5 = f(t + c5 * h, Vec(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const Vec k6 = f(t + h, Vec(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    y_out = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = f(t + h, y_out);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  }
};

/// PI controller on the weighted error norm (exponents 0.7/5 and 0.4/5).
class PiController {
 public:
  double next_factor(double err_norm, bool accepted) {
    constexpr double alpha = 0.7 / 5.0, beta = 0.4 / 5.0, safety = 0.9;
    constexpr double min_fac = 0.2, max_fac = 5.0;
    const double e = std::max(err_norm, 1e-10);
    double fac = safety * std::pow(e, -alpha) * std::pow(prev_err_, beta);
    fac = std::clamp(fac, min_fac, max_fac);
    if (accepted) {
      prev_err_ = std::max(err_norm, 1e-4);
    } else {
      fac = std::min(fac, 1.0);
    }
    return fac;
  }

 private:
  double prev_err_ = 1e-4;
};

/// Weighted RMS norm with per-component scale abs_scale + rel_tol * max(|y0_i|, |y1_i|).
template <typename Vec>
double weighted_rms(const Vec& err, const Vec& y0, const Vec& y1, double rel_tol, double abs_scale) {
  double s = 0.0;
  for (int i = 0; i < err.size(); ++i) {
    const double sc = abs_scale + rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    s += (err[i] / sc) * (err[i] / sc);
  }
  return std::sqrt(s / static_cast<double>(err.size()));
}

}  // namespace ricci::ode
