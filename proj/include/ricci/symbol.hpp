#pragma once

// Principal symbols at a point, acting on symmetric 2-tensors.
//
// Basis of the tensor space: pairs (i, j), i <= j, in the order (1,1), (1,2), ...,
// (1,n), (2,2), ..., (n,n). Off-diagonal elements are (e_i e_j^T + e_j e_i^T)/sqrt 2,
// so the coordinate inner product is the Frobenius product of matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <vector>

#include "ricci/error.hpp"
#include "ricci/io.hpp"
#include "ricci/parallel.hpp"
#include "ricci/random.hpp"

namespace ricci::symbol {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline int tensor_dim(int n) { return n * (n + 1) / 2; }

/// Validated symmetric positive-definite metric at a point.
struct PointMetric {
  Matrix g;
  Matrix g_inv;

  static PointMetric make(const Matrix& g) {
    require(g.rows() == g.cols() && g.rows() >= 1, "metric must be square");
    const double scale = g.cwiseAbs().maxCoeff();
    if (!((g - g.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * std::max(scale, 1.0)))
      throw Error(ErrorKind::DegenerateMetric, "metric is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    if (!(es.eigenvalues().minCoeff() > 0)) throw Error(ErrorKind::DegenerateMetric, "metric is not positive definite");
    return {g, g.inverse()};
  }

  int n() const { return static_cast<int>(g.rows()); }
  double norm_sq(const Vector& xi) const { return xi.dot(g_inv * xi); }
};

/// Symbol matrix of size m x m (or m x n for first-order maps into tensors).
struct SymbolOperator {
  int n = 0;
  Matrix matrix;
};

inline Vector to_vec(const Matrix& h) {
  const int n = static_cast<int>(h.rows());
  Vector v(tensor_dim(n));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) v[k++] = i == j ? h(i, i) : std::sqrt(2.0) * 0.5 * (h(i, j) + h(j, i));
  return v;
}

inline Matrix from_vec(const Vector& v, int n) {
  Matrix h(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double x = i == j ? v[k] : v[k] / std::sqrt(2.0);
      h(i, j) = h(j, i) = x;
      ++k;
    }
  return h;
}

namespace detail {

inline void check_covector(const PointMetric& g, const Vector& xi) {
  require(xi.size() == g.n(), "covector dimension does not match the metric");
  if (!(xi.norm() > 0)) throw Error(ErrorKind::DegenerateCovector, "covector must be nonzero");
}

/// Matrix of a linear map on symmetric tensors given as a function Matrix -> Matrix.
template <typename Map>
Matrix matrix_of(int n, Map&& f) {
  const int m = tensor_dim(n);
  Matrix out(m, m);
  for (int k = 0; k < m; ++k) out.col(k) = to_vec(f(from_vec(Vector::Unit(m, k), n)));
  return out;
}

/// [sigma(Ric')(xi) h] = 1/2 (xi (h eta)^T + (h eta) xi^T - |xi|^2 h - tr_g(h) xi xi^T), eta = g^{-1} xi.
inline Matrix apply_ricci(const PointMetric& g, const Vector& xi, const Matrix& h) {
  const Vector eta = g.g_inv * xi;
  const Vector h_eta = h * eta;
  const double tr = (g.g_inv * h).trace();
  return 0.5 * (xi * h_eta.transpose() + h_eta * xi.transpose() - g.norm_sq(xi) * h - tr * xi * xi.transpose());
}

/// Gauge covector V(h) = g^{pq} xi_p G(h)_{qk}, G(h) = h - 1/2 tr_g(h) g.
/// The trace part is applied as g eta = xi: forming g (g^{-1} xi) numerically
/// reintroduces an error of order cond(g) times the rounding unit.
inline Vector gauge_covector(const PointMetric& g, const Vector& xi, const Matrix& h) {
  const Vector eta = g.g_inv * xi;
  const double tr = (g.g_inv * h).trace();
  return h * eta - 0.5 * tr * xi;
}

inline Matrix sym_product(const Vector& a, const Vector& b) { return 0.5 * (a * b.transpose() + b * a.transpose()); }

}  // namespace detail

inline SymbolOperator ricci_symbol(const PointMetric& g, const Vector& xi) {
  detail::check_covector(g, xi);
  return {g.n(), detail::matrix_of(g.n(), [&](const Matrix& h) { return detail::apply_ricci(g, xi, h); })};
}

/// sigma(delta*)(xi) X = 1/2 (xi X^T + X xi^T), as an m x n matrix.
inline SymbolOperator divadj_symbol(const PointMetric& g, const Vector& xi) {
  detail::check_covector(g, xi);
  const int n = g.n();
  Matrix out(tensor_dim(n), n);
  for (int k = 0; k < n; ++k) out.col(k) = to_vec(detail::sym_product(xi, Vector::Unit(n, k)));
  return {n, out};
}

/// h -> sigma(delta*)(xi)[V(h)].
inline SymbolOperator gauge_correction(const PointMetric& g, const Vector& xi) {
  detail::check_covector(g, xi);
  return {g.n(), detail::matrix_of(g.n(), [&](const Matrix& h) {
            return detail::sym_product(xi, detail::gauge_covector(g, xi, h));
          })};
}

inline SymbolOperator deturck_symbol(const PointMetric& g, const Vector& xi) {
  auto ric = ricci_symbol(g, xi);
  ric.matrix -= gauge_correction(g, xi).matrix;
  return ric;
}

inline Vector singular_values(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues();
}

inline double operator_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return singular_values(a).maxCoeff();
}

/// Number of singular values below tol times the largest one.
inline int kernel_dim(const Matrix& a, double tol = 1e-9) {
  const Vector s = singular_values(a);
  const int full = static_cast<int>(a.cols());
  if (s.size() == 0 || s.maxCoeff() == 0.0) return full;
  const double cut = tol * s.maxCoeff();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] >= cut) ++rank;
  return full - rank;
}

inline int kernel_dim(const SymbolOperator& op, double tol = 1e-9) { return kernel_dim(op.matrix, tol); }

/// Operator norm of sigma(Ric')(xi) o sigma(delta*)(xi).
inline double composition_residual(const PointMetric& g, const Vector& xi) {
  return operator_norm(ricci_symbol(g, xi).matrix * divadj_symbol(g, xi).matrix);
}

/// Scale for composition_residual: product of the two operator norms.
inline double composition_scale(const PointMetric& g, const Vector& xi) {
  return operator_norm(ricci_symbol(g, xi).matrix) * operator_norm(divadj_symbol(g, xi).matrix);
}

namespace detail {

/// Size of the terms that cancel in the DeTurck identity. For ill-conditioned g
/// they exceed |xi|_g^2 by up to the condition number, so residuals are measured
/// against this scale.
inline double deturck_scale(const PointMetric& g, const Vector& xi) {
  return std::max({operator_norm(ricci_symbol(g, xi).matrix), operator_norm(gauge_correction(g, xi).matrix),
                   0.5 * g.norm_sq(xi)});
}

}  // namespace detail

/// Deviation of the DeTurck symbol from -1/2 |xi|_g^2 Id, relative to the size of
/// the Ricci symbol and gauge correction.
inline double deturck_residual(const PointMetric& g, const Vector& xi) {
  const double q = g.norm_sq(xi);
  const Matrix m = deturck_symbol(g, xi).matrix;
  const Matrix target = -0.5 * q * Matrix::Identity(m.rows(), m.cols());
  return operator_norm(m - target) / detail::deturck_scale(g, xi);
}

/// The splitting sigma(Ric') = sigma(1/2 Delta_L) - sigma(delta* o delta G), with
/// sigma(1/2 Delta_L) = -1/2 |xi|_g^2 Id and the symbol of the divergence taken as
/// h -> -V(h) (the product of two first-order symbols carries i^2 = -1).
/// Returns the norm of the deviation relative to the size of the terms.
inline double lichnerowicz_consistency(const PointMetric& g, const Vector& xi) {
  const double q = g.norm_sq(xi);
  const Matrix ric = ricci_symbol(g, xi).matrix;
  const Matrix lich = -0.5 * q * Matrix::Identity(ric.rows(), ric.cols());
  const Matrix div_adj_div = -gauge_correction(g, xi).matrix;
  return operator_norm(ric - (lich - div_adj_div)) / detail::deturck_scale(g, xi);
}

// ---------------------------------------------------------------------------
// Random samples and the suite report

inline double condition_number(const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
}

/// Random SPD metric A A^T with A uniform in [-1, 1]^{n x n}; resampled while the
/// condition number exceeds max_cond.
inline PointMetric random_metric(int n, rng::Stream& s, double max_cond = 1e6) {
  for (;;) {
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = s.uniform(-1.0, 1.0);
    Matrix g = a * a.transpose();
    g = 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    if (es.eigenvalues().minCoeff() > 0 && condition_number(g) <= max_cond) return PointMetric::make(g);
  }
}

/// Unit (Euclidean) covector, uniform on the sphere.
inline Vector random_unit_covector(int n, rng::Stream& s) {
  for (;;) {
    Vector x(n);
    for (int i = 0; i < n; ++i) x[i] = s.uniform(-1.0, 1.0);
    const double r = x.norm();
    if (r > 1e-3 && r <= 1.0) return x / r;
  }
}

/// Random orthogonal matrix from the QR factorisation of a uniform matrix.
inline Matrix random_orthogonal(int m, rng::Stream& s) {
  Matrix a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = s.uniform(-1.0, 1.0);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

struct SymbolSuiteReport {
  int n = 0;
  int trials = 0;
  int kernel_dim_mode = 0;
  int kernel_dim_mismatches = 0;  // trials where kernel_dim != n
  int deturck_kernel_max = 0;     // must stay 0
  double max_composition_residual = 0.0;  // relative to composition_scale
  double max_deturck_residual = 0.0;
  double max_lichnerowicz_residual = 0.0;

  bool pass() const {
    return kernel_dim_mismatches == 0 && deturck_kernel_max == 0 && max_composition_residual <= 1e-12 &&
           max_deturck_residual <= 1e-12 && max_lichnerowicz_residual <= 1e-12;
  }
};

inline SymbolSuiteReport symbol_suite(int n, int trials, std::uint64_t seed) {
  require(n >= 2 && n <= 5, "symbol suite supports n in {2,...,5}");
  require(trials > 0, "trials must be positive");
  struct Trial {
    int kdim, dkdim;
    double comp, det, lich;
  };
  std::vector<Trial> out(trials);
  parallel_for(static_cast<std::size_t>(trials), [&](std::size_t i) {
    rng::Stream s(seed, i);
    const auto g = random_metric(n, s);
    const Vector xi = random_unit_covector(n, s);
    out[i] = {kernel_dim(ricci_symbol(g, xi)), kernel_dim(deturck_symbol(g, xi)),
              composition_residual(g, xi) / composition_scale(g, xi), deturck_residual(g, xi),
              lichnerowicz_consistency(g, xi)};
  });
  SymbolSuiteReport rep;
  rep.n = n;
  rep.trials = trials;
  std::map<int, int> counts;
  for (const auto& t : out) {
    ++counts[t.kdim];
    if (t.kdim != n) ++rep.kernel_dim_mismatches;
    rep.deturck_kernel_max = std::max(rep.deturck_kernel_max, t.dkdim);
    rep.max_composition_residual = std::max(rep.max_composition_residual, t.comp);
    rep.max_deturck_residual = std::max(rep.max_deturck_residual, t.det);
    rep.max_lichnerowicz_residual = std::max(rep.max_lichnerowicz_residual, t.lich);
  }
  rep.kernel_dim_mode =
      std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  return rep;
}

inline void write_suite_csv(std::ostream& os, const std::vector<SymbolSuiteReport>& reps) {
  io::write_header(os, {"n", "trials", "kernel_dim_mode", "max_composition_residual", "max_deturck_residual"});
  for (const auto& r : reps)
    os << r.n << ',' << r.trials << ',' << r.kernel_dim_mode << ',' << io::format_double(r.max_composition_residual)
       << ',' << io::format_double(r.max_deturck_residual) << '\n';
}

}  // namespace ricci::symbol
