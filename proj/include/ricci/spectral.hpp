#pragma once

// Real-to-complex FFT on the periodic cube [0, 2pi)^d with N points per axis.
// Fields are row-major with the last axis fastest.

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "ricci/error.hpp"

namespace ricci::spectral {

using Complex = std::complex<double>;
using Field = std::vector<double>;
using Spectrum = std::vector<Complex>;

namespace detail {

struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

// FFTW planning is not thread-safe; execution with the new-array interface is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline const Plans& plans_for(int dim, int n) {
  static std::map<std::pair<int, int>, Plans> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find({dim, n});
  if (it != cache.end()) return it->second;
  std::vector<int> dims(dim, n);
  std::size_t real_size = 1;
  for (int d = 0; d < dim; ++d) real_size *= n;
  const std::size_t half_size = real_size / n * (n / 2 + 1);
  Field r(real_size);
  Spectrum c(half_size);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  Plans p;
  p.forward = fftw_plan_dft_r2c(dim, dims.data(), r.data(), reinterpret_cast<fftw_complex*>(c.data()), flags);
  p.backward = fftw_plan_dft_c2r(dim, dims.data(), reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                 flags | FFTW_DESTROY_INPUT);
  if (!p.forward || !p.backward) throw Error(ErrorKind::NumericalFailure, "FFTW planning failed");
  return cache.emplace(std::make_pair(dim, n), p).first->second;
}

}  // namespace detail

class PeriodicGrid {
 public:
  PeriodicGrid(int dim, int n) : dim_(dim), n_(n) {
    require(dim >= 1 && dim <= 4, "grid dimension must be between 1 and 4");
    require(n >= 4 && n % 2 == 0, "grid size must be even and at least 4");
    size_ = 1;
    for (int d = 0; d < dim; ++d) size_ *= static_cast<std::size_t>(n);
    half_size_ = size_ / n * (n / 2 + 1);
    plans_ = &detail::plans_for(dim, n);
  }

  int dim() const { return dim_; }
  int n() const { return n_; }
  std::size_t size() const { return size_; }
  std::size_t spectrum_size() const { return half_size_; }
  double spacing() const { return 2.0 * M_PI / n_; }
  double cell_volume() const { return std::pow(spacing(), dim_); }

  /// Coordinate of grid point `index` along `axis`.
  double coordinate(std::size_t index, int axis) const {
    std::size_t stride = 1;
    for (int d = dim_ - 1; d > axis; --d) stride *= n_;
    return spacing() * static_cast<double>((index / stride) % n_);
  }

  template <typename F>
  Field sample(F&& f) const {
    Field out(size_);
    std::array<double, 4> x{};
    for (std::size_t i = 0; i < size_; ++i) {
      for (int d = 0; d < dim_; ++d) x[d] = coordinate(i, d);
      out[i] = f(x);
    }
    return out;
  }

  Spectrum forward(const Field& u) const {
    require(u.size() == size_, "field does not match grid");
    Spectrum out(half_size_);
    fftw_execute_dft_r2c(plans_->forward, const_cast<double*>(u.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
    return out;
  }

  /// Inverse transform including the 1/N^d normalisation.
  Field backward(Spectrum s) const {
    require(s.size() == half_size_, "spectrum does not match grid");
    Field out(size_);
    fftw_execute_dft_c2r(plans_->backward, reinterpret_cast<fftw_complex*>(s.data()), out.data());
    const double scale = 1.0 / static_cast<double>(size_);
    for (double& v : out) v *= scale;
    return out;
  }

  /// Signed wavenumber of spectral entry `j` along `axis`.
  int wavenumber(std::size_t j, int axis) const {
    const int half = n_ / 2 + 1;
    std::size_t stride = 1;
    for (int d = dim_ - 1; d > axis; --d) stride *= (d == dim_ - 1 ? half : n_);
    if (axis == dim_ - 1) return static_cast<int>(j % half);
    const int m = static_cast<int>((j / stride) % n_);
    return m <= n_ / 2 ? m : m - n_;
  }

  /// Applies prod_a (i k_a)^{orders[a]} to a spectrum. Axes with an odd order lose
  /// their Nyquist mode, which has no real-valued odd derivative.
  Spectrum differentiate(const Spectrum& s, const std::array<int, 4>& orders) const {
    Spectrum out(s);
    for (std::size_t j = 0; j < half_size_; ++j) {
      Complex factor = 1.0;
      for (int a = 0; a < dim_; ++a) {
        if (orders[a] == 0) continue;
        const int k = wavenumber(j, a);
        if (orders[a] % 2 == 1 && std::abs(k) == n_ / 2) {
          factor = 0.0;
          break;
        }
        for (int p = 0; p < orders[a]; ++p) factor *= Complex(0.0, static_cast<double>(k));
      }
      out[j] *= factor;
    }
    return out;
  }

  Field derivative(const Spectrum& s, const std::array<int, 4>& orders) const {
    return backward(differentiate(s, orders));
  }

  Field derivative(const Field& u, const std::array<int, 4>& orders) const {
    return derivative(forward(u), orders);
  }

  Spectrum laplacian(const Spectrum& s) const {
    Spectrum out(s);
    for (std::size_t j = 0; j < half_size_; ++j) {
      double k2 = 0.0;
      for (int a = 0; a < dim_; ++a) {
        const double k = wavenumber(j, a);
        k2 += k * k;
      }
      out[j] *= -k2;
    }
    return out;
  }

  Field laplacian(const Field& u) const { return backward(laplacian(forward(u))); }

  /// Mean-zero solution of lap(w) = rhs; the mean of rhs is discarded.
  Field inverse_laplacian(const Field& rhs) const {
    Spectrum s = forward(rhs);
    for (std::size_t j = 0; j < half_size_; ++j) {
      double k2 = 0.0;
      for (int a = 0; a < dim_; ++a) {
        const double k = wavenumber(j, a);
        k2 += k * k;
      }
      s[j] = k2 == 0.0 ? Complex(0.0) : s[j] / (-k2);
    }
    return backward(std::move(s));
  }

  double mean(const Field& u) const {
    double s = 0.0;
    for (double v : u) s += v;
    return s / static_cast<double>(u.size());
  }

  /// Integral over the cube with the uniform (trapezoidal) rule.
  double integrate(const Field& u) const { return mean(u) * std::pow(2.0 * M_PI, dim_); }

 private:
  int dim_;
  int n_;
  std::size_t size_ = 0;
  std::size_t half_size_ = 0;
  const detail::Plans* plans_ = nullptr;
};

}  // namespace ricci::spectral
