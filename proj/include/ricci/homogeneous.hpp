#pragma once

// Left-invariant diagonal metrics on three-dimensional unimodular Lie groups,
// written in a Milnor frame {F1, F2, F3} with dual coframe {w1, w2, w3}:
//
//   [F2, F3] = 2 lambda F1,   [F3, F1] = 2 mu F2,   [F1, F2] = 2 nu F3,
//   g = A w1 (x) w1 + B w2 (x) w2 + C w3 (x) w3.
//
// Connection and curvature are computed from the structure constants alone
// (Koszul formula for left-invariant fields), so nothing here is specific to
// one geometry.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <string>

#include "ricci/error.hpp"

namespace ricci::homogeneous {

using Vec3 = Eigen::Vector3d;

struct MilnorSignature {
  int lambda = 0;
  int mu = 0;
  int nu = 0;

  /// Validates entries in {-1, 0, 1} and the ordering lambda <= mu <= nu.
  static MilnorSignature make(int l, int m, int n) {
    auto ok = [](int v) { return v >= -1 && v <= 1; };
    require(ok(l) && ok(m) && ok(n), "signature entries must lie in {-1, 0, 1}");
    require(l <= m && m <= n, "signature must satisfy lambda <= mu <= nu");
    return {l, m, n};
  }

  static constexpr MilnorSignature su2() { return {-1, -1, -1}; }
  static constexpr MilnorSignature nil() { return {-1, 0, 0}; }
  static constexpr MilnorSignature sol() { return {-1, 0, 1}; }
  static constexpr MilnorSignature abelian() { return {0, 0, 0}; }

  int operator[](int i) const { return i == 0 ? lambda : (i == 1 ? mu : nu); }
  bool operator==(const MilnorSignature&) const = default;
};

struct DiagonalMetric {
  double A = 1.0;
  double B = 1.0;
  double C = 1.0;

  static DiagonalMetric make(double a, double b, double c) {
    require(a > 0 && b > 0 && c > 0 && std::isfinite(a) && std::isfinite(b) && std::isfinite(c),
            "metric coefficients must be finite and positive");
    return {a, b, c};
  }
  static DiagonalMetric from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }

  double operator[](int i) const { return i == 0 ? A : (i == 1 ? B : C); }
  Vec3 vec() const { return {A, B, C}; }
  double volume_density() const { return std::sqrt(A * B * C); }
  double min() const { return std::min({A, B, C}); }
  DiagonalMetric scaled(double s) const { return {s * A, s * B, s * C}; }
  bool valid() const { return A > 0 && B > 0 && C > 0 && std::isfinite(A * B * C); }
};

/// c(k, i, j) is the F_k component of [F_i, F_j]. Integer valued for Milnor frames.
class StructureConstants {
 public:
  StructureConstants() { clear(); }

  int operator()(int k, int i, int j) const { return c_[k][i][j]; }

  void set_bracket(int i, int j, int k, int value) {
    c_[k][i][j] = value;
    c_[k][j][i] = -value;
  }

  /// trace(ad F_i) = sum_k c(k, i, k).
  int ad_trace(int i) const {
    int t = 0;
    for (int k = 0; k < 3; ++k) t += c_[k][i][k];
    return t;
  }

  /// Largest |[[F_i,F_j],F_l] + cyclic| over all triples, exact in integers.
  int jacobi_defect() const {
    int worst = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l)
          for (int m = 0; m < 3; ++m) {
            int s = 0;
            for (int p = 0; p < 3; ++p) {
              s += c_[p][i][j] * c_[m][p][l];
              s += c_[p][j][l] * c_[m][p][i];
              s += c_[p][l][i] * c_[m][p][j];
            }
            worst = std::max(worst, std::abs(s));
          }
    return worst;
  }

 private:
  void clear() {
    for (auto& a : c_)
      for (auto& b : a) b.fill(0);
  }
  std::array<std::array<std::array<int, 3>, 3>, 3> c_{};
};

inline StructureConstants milnor_structure(const MilnorSignature& sig) {
  StructureConstants c;
  c.set_bracket(1, 2, 0, 2 * sig.lambda);
  c.set_bracket(2, 0, 1, 2 * sig.mu);
  c.set_bracket(0, 1, 2, 2 * sig.nu);
  return c;
}

/// table[i][j] holds frame coefficients of a vector indexed by (i, j).
using FrameTable = std::array<std::array<Vec3, 3>, 3>;

/// (ad F_i)^* F_j, the metric adjoint of ad F_i applied to F_j.
inline Vec3 ad_adjoint(const StructureConstants& c, const DiagonalMetric& g, int i, int j) {
  // <(ad F_i)^* F_j, F_k> = <F_j, [F_i, F_k]> = g_jj c(j, i, k)
  Vec3 out;
  for (int k = 0; k < 3; ++k) out[k] = g[j] * c(j, i, k) / g[k];
  return out;
}

/// The ad* matrix in its customary layout: entry (i, j) is (ad F_j)^* F_i,
/// so that entry (1, 2) reads 2 lambda (A/C) F3.
inline FrameTable ad_star_table(const MilnorSignature& sig, const DiagonalMetric& g) {
  const auto c = milnor_structure(sig);
  FrameTable t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = ad_adjoint(c, g, j, i);
  return t;
}

/// nabla[i][j] = coefficients of nabla_{F_i} F_j, from
/// nabla_X Y = 1/2 ([X,Y] - (ad X)^* Y - (ad Y)^* X).
inline FrameTable connection_coefficients(const StructureConstants& c, const DiagonalMetric& g) {
  FrameTable nabla;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Vec3 bracket;
      for (int k = 0; k < 3; ++k) bracket[k] = c(k, i, j);
      nabla[i][j] = 0.5 * (bracket - ad_adjoint(c, g, i, j) - ad_adjoint(c, g, j, i));
    }
  return nabla;
}

inline FrameTable connection_coefficients(const MilnorSignature& sig, const DiagonalMetric& g) {
  return connection_coefficients(milnor_structure(sig), g);
}

/// rm[a][b][c][d] = <R(F_a, F_b) F_c, F_d>.
using RiemannTensor = std::array<std::array<std::array<std::array<double, 3>, 3>, 3>, 3>;

inline RiemannTensor riemann_tensor(const StructureConstants& c, const DiagonalMetric& g) {
  const FrameTable nabla = connection_coefficients(c, g);
  // nabla_X of a constant-coefficient combination sum_k v_k F_k
  auto apply = [&](int a, const Vec3& v) {
    Vec3 out = Vec3::Zero();
    for (int k = 0; k < 3; ++k) out += v[k] * nabla[a][k];
    return out;
  };
  RiemannTensor rm{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int e = 0; e < 3; ++e) {
        // R(F_a,F_b)F_e = nabla_a nabla_b F_e - nabla_b nabla_a F_e - nabla_[F_a,F_b] F_e
        Vec3 v = apply(a, nabla[b][e]) - apply(b, nabla[a][e]);
        for (int k = 0; k < 3; ++k) v -= c(k, a, b) * nabla[k][e];
        for (int d = 0; d < 3; ++d) rm[a][b][e][d] = v[d] * g[d];
      }
  return rm;
}

/// Full Ricci form Ric(F_i, F_j) = sum_a <R(F_a, F_i) F_j, F_a> / g_aa.
inline Eigen::Matrix3d ricci_matrix(const StructureConstants& c, const DiagonalMetric& g) {
  const RiemannTensor rm = riemann_tensor(c, g);
  Eigen::Matrix3d ric = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a) ric(i, j) += rm[a][i][j][a] / g[a];
  return ric;
}

struct CurvatureData {
  Vec3 ricci = Vec3::Zero();      // Ric(F_i, F_i)
  Vec3 sectional = Vec3::Zero();  // K(F1,F2), K(F1,F3), K(F2,F3)
  double scalar = 0.0;

  /// Eigenvalues of Ric as an endomorphism, Ric(F_i,F_i) / g_ii.
  Vec3 mixed_eigenvalues(const DiagonalMetric& g) const {
    return {ricci[0] / g.A, ricci[1] / g.B, ricci[2] / g.C};
  }
  double max_abs_sectional() const { return sectional.cwiseAbs().maxCoeff(); }
};

/// Normalized sectional curvatures <R(F_i,F_j)F_j,F_i> / (g_ii g_jj) in the order (12, 13, 23).
inline Vec3 sectional_curvatures(const StructureConstants& c, const DiagonalMetric& g) {
  const RiemannTensor rm = riemann_tensor(c, g);
  auto k = [&](int i, int j) { return rm[i][j][j][i] / (g[i] * g[j]); };
  return {k(0, 1), k(0, 2), k(1, 2)};
}

inline Vec3 sectional_curvatures(const MilnorSignature& sig, const DiagonalMetric& g) {
  return sectional_curvatures(milnor_structure(sig), g);
}

inline CurvatureData ricci_diagonal(const MilnorSignature& sig, const DiagonalMetric& g) {
  const auto c = milnor_structure(sig);
  const RiemannTensor rm = riemann_tensor(c, g);
  CurvatureData out;
  Eigen::Matrix3d ric = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a) ric(i, j) += rm[a][i][j][a] / g[a];

  // Milnor frames diagonalize Ric; any off-diagonal residue is a bug upstream.
  const double scale = ric.cwiseAbs().maxCoeff() + 1.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && std::abs(ric(i, j)) > 1e-9 * scale)
        throw Error(ErrorKind::InconsistentState, "off-diagonal Ricci entry in a Milnor frame");

  out.ricci = ric.diagonal();
  out.scalar = out.ricci[0] / g.A + out.ricci[1] / g.B + out.ricci[2] / g.C;
  auto k = [&](int i, int j) { return rm[i][j][j][i] / (g[i] * g[j]); };
  out.sectional = {k(0, 1), k(0, 2), k(1, 2)};
  return out;
}

inline std::string geometry_name(const MilnorSignature& sig) {
  if (sig == MilnorSignature::su2()) return "su2";
  if (sig == MilnorSignature::nil()) return "nil";
  if (sig == MilnorSignature::sol()) return "sol";
  if (sig == MilnorSignature::abelian()) return "abelian";
  return "custom";
}

}  // namespace ricci::homogeneous
