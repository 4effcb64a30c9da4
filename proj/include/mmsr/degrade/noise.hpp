#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "mmsr/image.hpp"
#include "mmsr/rng.hpp"

namespace mmsr::degrade {

/// Additive N(0, sigma^2) noise, sigma on the [0,1] intensity scale. With
/// `gray` one noise plane is shared by all channels.
inline Image add_gaussian_noise(const Image& img, double sigma, bool gray, Rng& rng) {
  require_image(img, "add_gaussian_noise");
  if (!(sigma >= 0)) throw std::invalid_argument("add_gaussian_noise: sigma must be non-negative");
  if (sigma == 0) return img;
  std::normal_distribution<double> n(0.0, sigma);
  Image out = img;
  const std::size_t plane = height(img) * width(img);
  if (gray) {
    std::vector<double> field(plane);
    for (auto& v : field) v = n(rng);
    for (std::size_t c = 0; c < channels(img); ++c)
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += field[i];
  } else {
    for (auto& v : out.values()) v += n(rng);
  }
  return clip01(std::move(out));
}

/// Shot noise: Poisson(img * lambda) / lambda with lambda = 255 * scale.
/// With `gray` the noise is computed on the luma plane and added to every channel.
inline Image add_poisson_noise(const Image& img, double scale, bool gray, Rng& rng) {
  require_image(img, "add_poisson_noise");
  if (!(scale > 0)) throw std::invalid_argument("add_poisson_noise: scale must be positive");
  const double lambda = 255.0 * scale;
  auto draw = [&](double v) {
    const double mean_count = std::max(0.0, v) * lambda;
    if (mean_count == 0) return 0.0;
    std::poisson_distribution<long long> p(mean_count);
    return static_cast<double>(p(rng)) / lambda;
  };
  Image out = img;
  const std::size_t plane = height(img) * width(img);
  if (gray && channels(img) == 3) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double luma = 0.299 * img[i] + 0.587 * img[plane + i] + 0.114 * img[2 * plane + i];
      const double d = draw(luma) - luma;
      for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] += d;
    }
  } else {
    for (auto& v : out.values()) v = draw(v);
  }
  return clip01(std::move(out));
}

}  // namespace mmsr::degrade
