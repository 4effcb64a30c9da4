#pragma once

// Procedural stand-ins for natural photographs: smooth illumination, hard-edged
// occluding shapes, oriented periodic textures and multi-octave value noise.
// Every image is a pure function of (seed, extents).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "mmsr/image.hpp"
#include "mmsr/rng.hpp"

namespace mmsr::synth {

namespace detail {

using Color = std::array<double, 3>;

inline Color random_color(Rng& rng) { return {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)}; }

// Bilinearly interpolated lattice noise with `cells` cells across the larger extent.
inline std::vector<double> value_noise(std::size_t h, std::size_t w, std::size_t cells, Rng& rng) {
  const std::size_t gh = cells + 2, gw = cells + 2;
  std::vector<double> grid(gh * gw);
  for (auto& v : grid) v = uniform(rng, -1, 1);
  std::vector<double> out(h * w);
  const double step = static_cast<double>(std::max(h, w)) / static_cast<double>(cells);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double gy = static_cast<double>(y) / step, gx = static_cast<double>(x) / step;
      const auto iy = static_cast<std::size_t>(gy), ix = static_cast<std::size_t>(gx);
      const double fy = gy - static_cast<double>(iy), fx = gx - static_cast<double>(ix);
      // smoothstep weights
      const double sy = fy * fy * (3 - 2 * fy), sx = fx * fx * (3 - 2 * fx);
      const double a = grid[iy * gw + ix], b = grid[iy * gw + ix + 1];
      const double c = grid[(iy + 1) * gw + ix], d = grid[(iy + 1) * gw + ix + 1];
      out[y * w + x] = (a * (1 - sx) + b * sx) * (1 - sy) + (c * (1 - sx) + d * sx) * sy;
    }
  return out;
}

}  // namespace detail

/// RGB image in [0,1] with edges and textures at several scales.
inline Image natural_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(derive_seed(seed, {0x5717}));
  Image img = make_image(3, h, w);
  const double H = static_cast<double>(h), W = static_cast<double>(w);

  // Illumination gradient between two colours.
  const auto c0 = detail::random_color(rng), c1 = detail::random_color(rng);
  const double ang = uniform(rng, 0, 2 * std::numbers::pi);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * ((static_cast<double>(x) / W - 0.5) * std::cos(ang) + (static_cast<double>(y) / H - 0.5) * std::sin(ang));
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = c0[c] * (1 - t) + c1[c] * t;
    }

  // Occluding shapes, some carrying a stripe texture.
  const int shapes = std::uniform_int_distribution<int>(5, 12)(rng);
  for (int s = 0; s < shapes; ++s) {
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    const double cy = uniform(rng, 0, H), cx = uniform(rng, 0, W);
    const double ry = uniform(rng, 0.06, 0.35) * H, rx = uniform(rng, 0.06, 0.35) * W;
    const double rot = uniform(rng, 0, std::numbers::pi);
    const auto col = detail::random_color(rng);
    const bool striped = bernoulli(rng, 0.4);
    const double freq = uniform(rng, 0.15, 0.9);  // radians per pixel
    const double sang = uniform(rng, 0, std::numbers::pi);
    const double amp = uniform(rng, 0.1, 0.3);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double u = (dx * cr + dy * sr) / rx, v = (-dx * sr + dy * cr) / ry;
        bool inside = false;
        if (kind == 0) inside = u * u + v * v <= 1;
        else if (kind == 1) inside = std::abs(u) <= 1 && std::abs(v) <= 1;
        else inside = v >= -1 && v <= 1 && std::abs(u) <= (1 - v) * 0.5;
        if (!inside) continue;
        double mod = 0;
        if (striped) mod = amp * std::sin(freq * (static_cast<double>(x) * std::cos(sang) + static_cast<double>(y) * std::sin(sang)));
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = col[c] + mod;
      }
  }

  // Multi-octave texture, coarse to fine.
  const double tex_amp = uniform(rng, 0.03, 0.12);
  double amp = tex_amp;
  for (std::size_t cells = 4; cells <= std::max(h, w) / 2; cells *= 2) {
    const auto n = detail::value_noise(h, w, cells, rng);
    const auto tint = detail::random_color(rng);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < h * w; ++i) img[c * h * w + i] += amp * n[i] * (0.5 + tint[c]);
    amp *= 0.7;
  }
  return clip01(std::move(img));
}

/// A batch of distinct images drawn from consecutive child seeds.
inline std::vector<Image> image_set(std::uint64_t seed, std::size_t count, std::size_t h, std::size_t w) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(natural_image(derive_seed(seed, {i}), h, w));
  return out;
}

}  // namespace mmsr::synth
