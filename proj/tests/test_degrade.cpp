#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mmsr/degrade/kernels.hpp"
#include "mmsr/degrade/filters.hpp"
#include "mmsr/degrade/jpeg.hpp"
#include "mmsr/degrade/noise.hpp"
#include "mmsr/synth.hpp"

using namespace mmsr;
using namespace mmsr::degrade;

namespace {

// J1 by its power series in long double; accurate for moderate x.
long double j1_series(long double x) {
  const long double h = x / 2, h2 = h * h;
  long double term = h, sum = h;
  for (int m = 1; m < 200; ++m) {
    term *= -h2 / (static_cast<long double>(m) * (m + 1));
    sum += term;
  }
  return sum;
}

Image constant_image(std::size_t h, std::size_t w, double v) { return make_image(3, h, w, v); }

Image gradient_image(std::size_t h, std::size_t w) {
  Image im = make_image(3, h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) im.at(c, y, x) = 0.2 + 0.6 * (static_cast<double>(x + y) / static_cast<double>(h + w)) + 0.05 * c;
  return im;
}

}  // namespace

TEST(Kernels, GaussianIsoNormalizedSymmetricAndDeltaLimit) {
  for (double s : {0.2, 0.7, 1.0, 2.5, 3.0})
    for (int k : {3, 5, 7, 13, 21}) EXPECT_NEAR(gaussian_kernel_iso(s, k).sum(), 1.0, 1e-12);
  const auto d = gaussian_kernel_iso(1e-3, 7);
  EXPECT_NEAR(d(3, 3), 1.0, 1e-12);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j)
      if (i != 3 || j != 3) {
        EXPECT_NEAR(d(i, j), 0.0, 1e-12);
      }
  const auto k = gaussian_kernel_iso(1.0, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      EXPECT_NEAR(k(i, j), k(j, i), 1e-15);
      EXPECT_NEAR(k(i, j), k(4 - i, j), 1e-15);
      EXPECT_NEAR(k(i, j), k(i, 4 - j), 1e-15);
    }
  EXPECT_THROW(gaussian_kernel_iso(1.0, 4), std::invalid_argument);
  EXPECT_THROW(gaussian_kernel_iso(0.0, 5), std::invalid_argument);
}

TEST(Kernels, GaussianAniso) {
  for (double th : {0.0, 0.3, 1.2, 2.9}) {
    const auto a = gaussian_kernel_aniso(1.3, 1.3, th, 9), b = gaussian_kernel_iso(1.3, 9);
    for (std::size_t i = 0; i < a.w.size(); ++i) EXPECT_NEAR(a.w[i], b.w[i], 1e-12);
  }
  // theta = 0 with sigma_x >> sigma_y: mass on the center row.
  const auto row = gaussian_kernel_aniso(3.0, 0.2, 0.0, 11);
  double center_row = 0;
  for (int j = 0; j < 11; ++j) center_row += row(5, j);
  EXPECT_GT(center_row, 0.99);
  EXPECT_GT(row(5, 0), row(0, 5));
  // Rotating by pi/2 transposes the kernel.
  for (auto [sa, sb] : {std::pair{2.0, 0.5}, std::pair{0.7, 1.9}}) {
    const auto k0 = gaussian_kernel_aniso(sa, sb, 0.0, 9), k90 = gaussian_kernel_aniso(sa, sb, std::numbers::pi / 2, 9).transposed();
    for (std::size_t i = 0; i < k0.w.size(); ++i) EXPECT_NEAR(k0.w[i], k90.w[i], 1e-12);
  }
  for (double th = 0; th < 3.2; th += 0.4) EXPECT_NEAR(gaussian_kernel_aniso(2.2, 0.6, th, 15).sum(), 1.0, 1e-12);
}

TEST(Kernels, BesselJ1AgainstOracles) {
  EXPECT_EQ(bessel_j1(0.0), 0.0);
  EXPECT_NEAR(bessel_j1(1.0), 0.4400505857, 1e-10);
  for (double x = 0; x <= 10.0; x += 0.05) EXPECT_NEAR(bessel_j1(x), static_cast<double>(j1_series(x)), 1e-12) << x;
  for (double x = 0; x <= 50.0; x += 0.1) EXPECT_NEAR(bessel_j1(x), std::cyl_bessel_j(1.0, x), 1e-8) << x;
}

TEST(Kernels, SincNormalizedAndRadiallySymmetric) {
  for (double c : {std::numbers::pi / 3, 1.5, 2.2, std::numbers::pi})
    for (int k : {7, 13, 21}) {
      const auto s = sinc_kernel(c, k);
      EXPECT_NEAR(s.sum(), 1.0, 1e-9);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          EXPECT_NEAR(s(i, j), s(j, i), 1e-15);
          EXPECT_NEAR(s(i, j), s(k - 1 - i, k - 1 - j), 1e-15);
        }
    }
  EXPECT_THROW(sinc_kernel(0.0, 7), std::invalid_argument);
  EXPECT_THROW(sinc_kernel(3.5, 7), std::invalid_argument);
}

TEST(Convolve, IdentityDcAndNestedLoopOracle) {
  Rng rng(9);
  Image img = make_image(3, 8, 8);
  for (auto& v : img.values()) v = uniform(rng, 0, 1);
  EXPECT_EQ(convolve(img, Kernel2D::delta(5)), img);
  const auto flat = convolve(constant_image(9, 7, 0.37), gaussian_kernel_aniso(2.0, 0.7, 0.4, 7));
  for (double v : flat.values()) EXPECT_NEAR(v, 0.37, 1e-12);

  Kernel2D k{3, {}};
  for (int i = 0; i < 9; ++i) k.w.push_back(uniform(rng, -1, 1));
  const auto out = convolve(img, k);
  auto refl = [](long i, long n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  for (std::size_t c = 0; c < 3; ++c)
    for (long y = 0; y < 8; ++y)
      for (long x = 0; x < 8; ++x) {
        double acc = 0;
        for (long i = -1; i <= 1; ++i)
          for (long j = -1; j <= 1; ++j)
            acc += k(static_cast<int>(i + 1), static_cast<int>(j + 1)) * img.at(c, static_cast<std::size_t>(refl(y + i, 8)), static_cast<std::size_t>(refl(x + j, 8)));
        EXPECT_NEAR(out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)), acc, 1e-14);
      }
}

TEST(Resize, SizesIdentityDcAndAreaOracle) {
  Rng rng(1);
  Image img = make_image(3, 10, 14);
  for (auto& v : img.values()) v = uniform(rng, 0, 1);
  for (auto m : {ResizeMode::nearest, ResizeMode::bilinear, ResizeMode::bicubic}) {
    const auto same = resize(img, m, 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(same[i], img[i], 1e-12);
  }
  for (auto m : {ResizeMode::nearest, ResizeMode::bilinear, ResizeMode::bicubic, ResizeMode::area})
    for (double s : {0.25, 0.3, 0.5, 0.77, 1.0, 1.5, 2.0, 4.0}) {
      const auto r = resize(constant_image(12, 20, 0.61), m, s);
      EXPECT_EQ(height(r), static_cast<std::size_t>(std::llround(12 * s)));
      EXPECT_EQ(width(r), static_cast<std::size_t>(std::llround(20 * s)));
      for (double v : r.values()) EXPECT_NEAR(v, 0.61, 1e-12);
    }
  Image ramp = make_image(1, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i) / 15.0;
  const auto half = resize(ramp, ResizeMode::area, 0.5);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) {
      const double box = (ramp.at(0, 2 * y, 2 * x) + ramp.at(0, 2 * y, 2 * x + 1) + ramp.at(0, 2 * y + 1, 2 * x) + ramp.at(0, 2 * y + 1, 2 * x + 1)) / 4;
      EXPECT_NEAR(half.at(0, y, x), box, 1e-15);
    }
  EXPECT_THROW(resize(img, ResizeMode::bicubic, 0.0), std::invalid_argument);
  EXPECT_THROW(resize(img, ResizeMode::bicubic, 0.01), std::invalid_argument);
}

TEST(Noise, GaussianStatistics) {
  Rng rng(2);
  const Image mid = constant_image(256, 256, 0.5);
  EXPECT_EQ(add_gaussian_noise(mid, 0.0, false, rng), mid);
  const double sigma = 10.0 / 255.0;
  const auto out = add_gaussian_noise(mid, sigma, false, rng);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - mid[i];
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(out.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  EXPECT_NEAR(sd / sigma, 1.0, 0.05);
  const auto g = add_gaussian_noise(constant_image(32, 32, 0.5), 0.05, true, rng);
  const std::size_t plane = 32 * 32;
  for (std::size_t i = 0; i < plane; ++i) {
    EXPECT_EQ(g[i], g[plane + i]);
    EXPECT_EQ(g[i], g[2 * plane + i]);
  }
  for (double v : add_gaussian_noise(constant_image(64, 64, 0.98), 0.3, false, rng).values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Noise, PoissonStatistics) {
  Rng rng(4);
  EXPECT_EQ(add_poisson_noise(constant_image(16, 16, 0.0), 1.0, false, rng), constant_image(16, 16, 0.0));
  const double lambda = 255.0;
  const auto out = add_poisson_noise(constant_image(256, 256, 0.5), 1.0, false, rng);
  double s = 0, s2 = 0;
  for (double v : out.values()) {
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(out.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / (0.5 / lambda), 1.0, 0.10);
  const auto img = synth::natural_image(3, 32, 32);
  const auto near = add_poisson_noise(img, 1e4, false, rng);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(near[i], img[i], 1e-2);
  EXPECT_THROW(add_poisson_noise(img, 0.0, false, rng), std::invalid_argument);
}

TEST(Jpeg, QuantTableScaling) {
  const auto q50 = luma_quant_table(50);
  EXPECT_EQ(q50[0], 16);
  EXPECT_EQ(luma_quant_table(100)[0], 1);
  EXPECT_EQ(luma_quant_table(10)[0], std::clamp((16 * 500 + 50) / 100, 1, 255));
  EXPECT_EQ(chroma_quant_table(75)[0], (17 * 50 + 50) / 100);
  EXPECT_THROW(luma_quant_table(0), std::invalid_argument);
  EXPECT_THROW(jpeg_compress(constant_image(8, 8, 0.5), 101), std::invalid_argument);
}

TEST(Jpeg, RoundTripFidelity) {
  EXPECT_GE(psnr(jpeg_compress(gradient_image(64, 64), 100), gradient_image(64, 64)), 45.0);
  const auto img = synth::natural_image(77, 96, 96);
  double prev = std::numeric_limits<double>::infinity();
  for (int q : {95, 85, 75, 50, 30}) {
    const double p = psnr(jpeg_compress(img, q), img);
    EXPECT_LE(p, prev) << q;
    prev = p;
  }
  EXPECT_GT(psnr(jpeg_compress(img, 95), img), psnr(jpeg_compress(img, 75), img));
  EXPECT_GT(psnr(jpeg_compress(img, 75), img), psnr(jpeg_compress(img, 30), img));
  for (double v : jpeg_compress(img, 30).values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Jpeg, ConstantBlocks) {
  // Mid-gray has a zero DC coefficient after level shift, so every quality is exact.
  for (int q = 1; q <= 100; ++q) {
    const auto out = jpeg_compress(constant_image(8, 8, 128.0 / 255.0), q);
    for (double v : out.values()) EXPECT_NEAR(v, 128.0 / 255.0, 1e-12) << q;
  }
  // Other gray levels stay flat; the DC quantizer bounds the error by Q_dc / 16 levels,
  // which is at most one level for q >= 50.
  for (double level : {17.0, 64.0, 200.0, 251.0})
    for (int q : {10, 30, 50, 75, 95, 100}) {
      const auto out = jpeg_compress(constant_image(8, 8, level / 255.0), q);
      const double bound = luma_quant_table(q)[0] / 16.0 / 255.0;
      for (double v : out.values()) {
        EXPECT_NEAR(v, out[0], 1e-12);
        EXPECT_LE(std::abs(v - level / 255.0), bound + 1e-12) << level << " q" << q;
        if (q >= 50) {
          EXPECT_LE(std::abs(v - level / 255.0), 1.0 / 255.0 + 1e-12);
        }
      }
    }
}

TEST(Blur, HighFrequencyEnergyDecreasesWithSigma) {
  const auto img = synth::natural_image(5, 64, 64);
  double prev = laplacian_energy(img);
  for (double s = 0.3; s <= 3.0; s += 0.3) {
    const double e = laplacian_energy(convolve(img, gaussian_kernel_iso(s, 2 * static_cast<int>(std::ceil(3 * s)) + 1)));
    EXPECT_LT(e, prev) << s;
    prev = e;
  }
}
