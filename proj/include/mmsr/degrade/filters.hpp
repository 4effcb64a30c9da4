#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmsr/degrade/kernels.hpp"
#include "mmsr/image.hpp"

namespace mmsr::degrade {

/// Mirror index without repeating the edge sample (..., 2, 1, 0, 1, 2, ...).
inline std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Same-size per-channel correlation with reflect padding.
inline Image convolve(const Image& img, const Kernel2D& k) {
  require_image(img, "convolve");
  const auto c = channels(img), h = height(img), w = width(img);
  const int r = k.radius();
  std::vector<std::ptrdiff_t> rows(h + 2 * static_cast<std::size_t>(r)), cols(w + 2 * static_cast<std::size_t>(r));
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i] = reflect_index(static_cast<std::ptrdiff_t>(i) - r, static_cast<std::ptrdiff_t>(h));
  for (std::size_t i = 0; i < cols.size(); ++i)
    cols[i] = reflect_index(static_cast<std::ptrdiff_t>(i) - r, static_cast<std::ptrdiff_t>(w));
  Image out = make_image(c, h, w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0;
        for (int i = 0; i < k.size; ++i) {
          const auto sy = static_cast<std::size_t>(rows[y + static_cast<std::size_t>(i)]);
          for (int j = 0; j < k.size; ++j)
            acc += k(i, j) * img.at(ch, sy, static_cast<std::size_t>(cols[x + static_cast<std::size_t>(j)]));
        }
        out.at(ch, y, x) = acc;
      }
  return out;
}

enum class ResizeMode { nearest, bilinear, bicubic, area };

inline std::string_view to_string(ResizeMode m) {
  switch (m) {
    case ResizeMode::nearest: return "nearest";
    case ResizeMode::bilinear: return "bilinear";
    case ResizeMode::bicubic: return "bicubic";
    case ResizeMode::area: return "area";
  }
  return "?";
}

inline ResizeMode resize_mode_from_string(std::string_view s) {
  if (s == "nearest") return ResizeMode::nearest;
  if (s == "bilinear") return ResizeMode::bilinear;
  if (s == "bicubic") return ResizeMode::bicubic;
  if (s == "area") return ResizeMode::area;
  throw std::invalid_argument("unknown resize mode '" + std::string(s) + "'");
}

namespace detail {

/// Keys cubic with a = -0.5.
inline double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0;
}

inline double triangle(double x) {
  x = std::abs(x);
  return x < 1 ? 1 - x : 0;
}

struct Taps {
  std::vector<std::size_t> idx;
  std::vector<double> w;
};

// One set of taps per output sample along an axis of length n_in -> n_out.
inline std::vector<Taps> axis_taps(std::size_t n_in, std::size_t n_out, ResizeMode mode) {
  std::vector<Taps> taps(n_out);
  const double scale = static_cast<double>(n_out) / static_cast<double>(n_in);
  const auto last = static_cast<std::ptrdiff_t>(n_in) - 1;
  auto clampi = [&](std::ptrdiff_t i) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, last)); };
  for (std::size_t o = 0; o < n_out; ++o) {
    auto& t = taps[o];
    if (mode == ResizeMode::nearest) {
      t.idx.push_back(clampi(static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(o) + 0.5) / scale))));
      t.w.push_back(1.0);
      continue;
    }
    if (mode == ResizeMode::area) {
      const double lo = static_cast<double>(o) / scale, hi = static_cast<double>(o + 1) / scale;
      for (auto i = static_cast<std::ptrdiff_t>(std::floor(lo)); static_cast<double>(i) < hi; ++i) {
        const double cover = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (cover <= 0) continue;
        t.idx.push_back(clampi(i));
        t.w.push_back(cover);
      }
    } else {
      // Kernel support widens by 1/scale when shrinking (antialiasing).
      const double stretch = std::max(1.0, 1.0 / scale);
      const double support = (mode == ResizeMode::bicubic ? 2.0 : 1.0) * stretch;
      const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
      const auto first = static_cast<std::ptrdiff_t>(std::floor(center - support));
      const auto end = static_cast<std::ptrdiff_t>(std::ceil(center + support));
      for (auto i = first; i <= end; ++i) {
        const double d = (static_cast<double>(i) - center) / stretch;
        const double wt = mode == ResizeMode::bicubic ? cubic(d) : triangle(d);
        if (wt == 0) continue;
        t.idx.push_back(clampi(i));
        t.w.push_back(wt);
      }
    }
    double s = 0;
    for (double v : t.w) s += v;
    for (double& v : t.w) v /= s;
  }
  return taps;
}

}  // namespace detail

/// Resample to explicit extents.
inline Image resize_to(const Image& img, ResizeMode mode, std::size_t out_h, std::size_t out_w) {
  require_image(img, "resize");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize: output extents must be at least 1");
  const auto c = channels(img), h = height(img), w = width(img);
  if (out_h == h && out_w == w && mode != ResizeMode::area) {
    // All interpolating kernels are exact at integer offsets.
    return img;
  }
  const auto ty = detail::axis_taps(h, out_h, mode);
  const auto tx = detail::axis_taps(w, out_w, mode);
  Image tmp = make_image(c, h, out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0;
        for (std::size_t k = 0; k < tx[x].idx.size(); ++k) acc += tx[x].w[k] * img.at(ch, y, tx[x].idx[k]);
        tmp.at(ch, y, x) = acc;
      }
  Image out = make_image(c, out_h, out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0;
        for (std::size_t k = 0; k < ty[y].idx.size(); ++k) acc += ty[y].w[k] * tmp.at(ch, ty[y].idx[k], x);
        out.at(ch, y, x) = acc;
      }
  return out;
}

inline std::size_t scaled_extent(std::size_t n, double scale) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale));
}

/// Output size round(H*scale) x round(W*scale).
inline Image resize(const Image& img, ResizeMode mode, double scale) {
  if (!(scale > 0)) throw std::invalid_argument("resize: scale must be positive");
  require_image(img, "resize");
  return resize_to(img, mode, scaled_extent(height(img), scale), scaled_extent(width(img), scale));
}

}  // namespace mmsr::degrade
