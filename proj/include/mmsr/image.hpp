#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmsr/tensor.hpp"

namespace mmsr {

/// [C,H,W] image with values nominally in [0,1].
using Image = Tensor;

inline Image make_image(std::size_t c, std::size_t h, std::size_t w, Real fill = 0) { return Image(Shape{c, h, w}, fill); }

inline std::size_t channels(const Image& im) { return im.dim(0); }
inline std::size_t height(const Image& im) { return im.dim(1); }
inline std::size_t width(const Image& im) { return im.dim(2); }

inline void require_image(const Image& im, const char* who) {
  if (im.rank() != 3 || im.dim(1) == 0 || im.dim(2) == 0)
    throw ShapeError(std::string(who) + ": expected non-empty [C,H,W] image, got " + to_string(im.shape()));
}

inline Image clip01(Image im) {
  for (auto& v : im.values()) v = std::clamp<Real>(v, 0, 1);
  return im;
}

inline Image crop(const Image& im, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  require_image(im, "crop");
  if (y0 + h > height(im) || x0 + w > width(im)) throw ShapeError("crop: window outside image");
  Image out = make_image(channels(im), h, w);
  for (std::size_t c = 0; c < channels(im); ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = im.at(c, y0 + y, x0 + x);
  return out;
}

inline double mse(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ShapeError("mean_abs_diff: shape mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Peak signal-to-noise ratio in dB for unit peak.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

/// Sum of squared 4-neighbour Laplacian responses over interior pixels.
inline double laplacian_energy(const Image& im) {
  require_image(im, "laplacian_energy");
  double e = 0;
  for (std::size_t c = 0; c < channels(im); ++c)
    for (std::size_t y = 1; y + 1 < height(im); ++y)
      for (std::size_t x = 1; x + 1 < width(im); ++x) {
        const double l = 4 * im.at(c, y, x) - im.at(c, y - 1, x) - im.at(c, y + 1, x) - im.at(c, y, x - 1) - im.at(c, y, x + 1);
        e += l * l;
      }
  return e;
}

}  // namespace mmsr
