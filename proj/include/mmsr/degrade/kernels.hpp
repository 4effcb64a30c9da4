#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmsr::degrade {

/// Square, odd-sized filter kernel stored row-major; element (i,j) sits at
/// row offset i - size/2 and column offset j - size/2.
struct Kernel2D {
  int size = 0;
  std::vector<double> w;

  double operator()(int row, int col) const { return w[static_cast<std::size_t>(row * size + col)]; }
  double& operator()(int row, int col) { return w[static_cast<std::size_t>(row * size + col)]; }
  int radius() const { return size / 2; }

  double sum() const {
    double s = 0;
    for (double v : w) s += v;
    return s;
  }

  Kernel2D transposed() const {
    Kernel2D t{size, w};
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) t(i, j) = (*this)(j, i);
    return t;
  }

  static Kernel2D delta(int size) {
    Kernel2D k{size, std::vector<double>(static_cast<std::size_t>(size * size), 0.0)};
    k(size / 2, size / 2) = 1.0;
    return k;
  }
};

namespace detail {

inline void require_odd(int ksize, const char* who) {
  if (ksize < 1 || ksize % 2 == 0) throw std::invalid_argument(std::string(who) + ": kernel size must be odd and positive, got " + std::to_string(ksize));
}

inline void normalize(Kernel2D& k) {
  const double s = k.sum();
  for (auto& v : k.w) v /= s;
}

}  // namespace detail

inline Kernel2D gaussian_kernel_aniso(double sigma_x, double sigma_y, double theta, int ksize) {
  detail::require_odd(ksize, "gaussian_kernel_aniso");
  if (!(sigma_x > 0 && sigma_y > 0)) throw std::invalid_argument("gaussian_kernel_aniso: sigmas must be positive");
  // Inverse of R diag(sx^2, sy^2) R^T.
  const double c = std::cos(theta), s = std::sin(theta);
  const double ix = 1.0 / (sigma_x * sigma_x), iy = 1.0 / (sigma_y * sigma_y);
  const double a = c * c * ix + s * s * iy;
  const double b = c * s * (ix - iy);
  const double d = s * s * ix + c * c * iy;
  Kernel2D k{ksize, std::vector<double>(static_cast<std::size_t>(ksize * ksize))};
  const int r = ksize / 2;
  for (int i = 0; i < ksize; ++i)
    for (int j = 0; j < ksize; ++j) {
      const double y = i - r, x = j - r;
      k(i, j) = std::exp(-0.5 * (a * x * x + 2 * b * x * y + d * y * y));
    }
  detail::normalize(k);
  return k;
}

inline Kernel2D gaussian_kernel_iso(double sigma, int ksize) {
  detail::require_odd(ksize, "gaussian_kernel_iso");
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_kernel_iso: sigma must be positive");
  Kernel2D k{ksize, std::vector<double>(static_cast<std::size_t>(ksize * ksize))};
  const int r = ksize / 2;
  for (int i = 0; i < ksize; ++i)
    for (int j = 0; j < ksize; ++j) {
      const double y = i - r, x = j - r;
      k(i, j) = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
    }
  detail::normalize(k);
  return k;
}

/// Bessel function of the first kind, order 1. Power series below 12,
/// Hankel asymptotic expansion above.
inline double bessel_j1(double x) {
  if (x < 0) return -bessel_j1(-x);
  if (x < 12.0) {
    const double h = 0.5 * x;
    const double h2 = h * h;
    double term = h, sum = h;
    for (int m = 1; m < 80; ++m) {
      term *= -h2 / (static_cast<double>(m) * static_cast<double>(m + 1));
      sum += term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  // P ~ 1 - (mu-1)(mu-9)/(2!(8x)^2) + ..., Q ~ (mu-1)/(8x) - ..., mu = 4.
  const double mu = 4.0;
  const double z = 8.0 * x;
  double p = 1.0, q = 0.0;
  double term = 1.0;
  for (int k = 1; k < 30; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= (mu - odd * odd) / (static_cast<double>(k) * z);
    const double prev = std::abs(term);
    if (k % 2 == 1) {
      q += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    } else {
      p += ((k / 2) % 2 == 0 ? 1.0 : -1.0) * term;
    }
    if (prev < 1e-17) break;
  }
  const double chi = x - 0.75 * std::numbers::pi;
  return std::sqrt(2.0 / (std::numbers::pi * x)) * (p * std::cos(chi) - q * std::sin(chi));
}

/// Circular low-pass (2D sinc) kernel with the given cutoff in radians/sample.
inline Kernel2D sinc_kernel(double cutoff, int ksize) {
  detail::require_odd(ksize, "sinc_kernel");
  if (!(cutoff > 0 && cutoff <= std::numbers::pi)) throw std::invalid_argument("sinc_kernel: cutoff must lie in (0, pi]");
  Kernel2D k{ksize, std::vector<double>(static_cast<std::size_t>(ksize * ksize))};
  const int r = ksize / 2;
  for (int i = 0; i < ksize; ++i)
    for (int j = 0; j < ksize; ++j) {
      const double rr = std::hypot(static_cast<double>(i - r), static_cast<double>(j - r));
      k(i, j) = rr == 0 ? cutoff * cutoff / (4 * std::numbers::pi) : cutoff * bessel_j1(cutoff * rr) / (2 * std::numbers::pi * rr);
    }
  detail::normalize(k);
  return k;
}

}  // namespace mmsr::degrade
