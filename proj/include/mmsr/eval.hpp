#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmsr/degrade/recipe.hpp"
#include "mmsr/nets.hpp"

namespace mmsr::eval {

enum class SweepKind { gaussian_noise, gaussian_blur, jpeg };

inline constexpr SweepKind kAllKinds[] = {SweepKind::gaussian_noise, SweepKind::gaussian_blur, SweepKind::jpeg};
inline constexpr std::size_t kSweepPoints = 20;

inline std::string_view to_string(SweepKind k) {
  switch (k) {
    case SweepKind::gaussian_noise: return "gaussian-noise";
    case SweepKind::gaussian_blur: return "gaussian-blur";
    case SweepKind::jpeg: return "jpeg";
  }
  return "?";
}

inline SweepKind sweep_kind_from_string(std::string_view s) {
  for (auto k : kAllKinds)
    if (to_string(k) == s) return k;
  if (s == "noise") return SweepKind::gaussian_noise;
  if (s == "blur") return SweepKind::gaussian_blur;
  throw std::invalid_argument("unknown sweep kind '" + std::string(s) + "'");
}

/// Level range per kind: noise sigma on the 0-255 scale, blur sigma in LR
/// pixels, JPEG quality.
inline std::pair<double, double> level_range(SweepKind k) {
  switch (k) {
    case SweepKind::gaussian_noise: return {1.0, 30.0};
    case SweepKind::gaussian_blur: return {0.2, 3.0};
    case SweepKind::jpeg: return {30.0, 95.0};
  }
  return {0, 0};
}

/// `n` endpoint-inclusive uniformly spaced points.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

inline std::vector<double> sweep_levels(SweepKind k) {
  const auto [lo, hi] = level_range(k);
  return linspace(lo, hi, kSweepPoints);
}

/// 1-based ranks; tied values share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation. A constant input gives 0.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");
  return pearson(average_ranks(xs), average_ranks(ys));
}

/// Bicubic x1/4 of the HR image, then exactly one degradation at `level`.
/// The noise field depends only on `noise_seed`, so levels differ only in amplitude.
inline Image sweep_input(const Image& hr, SweepKind kind, double level, std::uint64_t noise_seed, double final_scale = 0.25) {
  const Image lr = degrade::resize(hr, degrade::ResizeMode::bicubic, final_scale);
  switch (kind) {
    case SweepKind::gaussian_noise: {
      Rng rng(noise_seed);
      return degrade::add_gaussian_noise(lr, level / 255.0, false, rng);
    }
    case SweepKind::gaussian_blur: {
      const int k = 2 * static_cast<int>(std::ceil(3 * level)) + 1;
      return degrade::convolve(lr, degrade::gaussian_kernel_iso(level, std::max(k, 3)));
    }
    case SweepKind::jpeg: return degrade::jpeg_compress(lr, static_cast<int>(std::lround(level)));
  }
  return lr;
}

struct SweepResult {
  SweepKind kind = SweepKind::gaussian_noise;
  std::vector<double> levels;
  std::vector<double> mean_score;
  std::vector<double> std_score;
  double rho = 0;  // Spearman(level, mean score)

  double dynamic_range() const {
    auto [lo, hi] = std::minmax_element(mean_score.begin(), mean_score.end());
    return *hi - *lo;
  }

  nlohmann::json summary() const { return {{"kind", std::string(to_string(kind))}, {"rho", rho}, {"range", dynamic_range()}}; }

  std::string csv() const {
    std::string s = "level,mean_score,std\n";
    for (std::size_t i = 0; i < levels.size(); ++i) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%.6g,%.9g,%.9g\n", levels[i], mean_score[i], std_score[i]);
      s += buf;
    }
    return s;
  }
};

/// Noise and JPEG sweeps read the noise branch, blur sweeps the blur branch.
inline double branch_score(const nets::ScorePair& s, SweepKind k) { return k == SweepKind::gaussian_blur ? s.s_b : s.s_n; }

inline SweepResult degradation_sweep(const nets::Udem& model, const std::vector<Image>& hr_images, SweepKind kind, double final_scale = 0.25) {
  if (hr_images.size() < 5) throw std::invalid_argument("degradation_sweep: need at least 5 evaluation images");
  SweepResult r;
  r.kind = kind;
  r.levels = sweep_levels(kind);
  for (double level : r.levels) {
    std::vector<double> scores;
    for (std::size_t i = 0; i < hr_images.size(); ++i)
      scores.push_back(branch_score(model.score(sweep_input(hr_images[i], kind, level, derive_seed(0x5EE9, {i}), final_scale)), kind));
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double var = 0;
    for (double s : scores) var += (s - mean) * (s - mean);
    r.mean_score.push_back(mean);
    r.std_score.push_back(std::sqrt(var / n));
  }
  r.rho = spearman(r.levels, r.mean_score);
  return r;
}

struct AblationEntry {
  SweepKind kind;
  double range_with = 0, range_without = 0;
  bool pass() const { return range_with > range_without; }
};

struct AblationReport {
  std::vector<AblationEntry> entries;
  bool pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const AblationEntry& e) { return e.pass(); });
  }
  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
      j.push_back({{"kind", std::string(to_string(e.kind))}, {"range_with", e.range_with}, {"range_without", e.range_without}, {"pass", e.pass()}});
    return j;
  }
};

/// Sweep dynamic range of a model trained with anchor terms versus one trained without.
inline AblationReport anchor_ablation(const nets::Udem& with_anchor, const nets::Udem& without_anchor, const std::vector<Image>& hr_images,
                                      double final_scale = 0.25) {
  AblationReport rep;
  for (auto k : kAllKinds)
    rep.entries.push_back({k, degradation_sweep(with_anchor, hr_images, k, final_scale).dynamic_range(),
                           degradation_sweep(without_anchor, hr_images, k, final_scale).dynamic_range()});
  return rep;
}

struct AnchorScores {
  nets::ScorePair maximal;  // mean over a1-type inputs
  nets::ScorePair clean;    // mean over a2-type inputs
};

/// Mean raw scores on maximal-degradation and clean-downsample versions of each image.
inline AnchorScores anchor_scores(const nets::Udem& model, const std::vector<Image>& hr_images, const degrade::DegradeConfig& cfg,
                                  std::uint64_t seed) {
  AnchorScores a;
  const double n = static_cast<double>(hr_images.size());
  for (std::size_t i = 0; i < hr_images.size(); ++i) {
    const auto hi = model.score(degrade::apply_recipe(hr_images[i], degrade::maximal_recipe(cfg, derive_seed(seed, {i}))));
    const auto lo = model.score(degrade::apply_recipe(hr_images[i], degrade::clean_recipe(cfg.final_scale)));
    a.maximal.s_n += hi.s_n / n;
    a.maximal.s_b += hi.s_b / n;
    a.clean.s_n += lo.s_n / n;
    a.clean.s_b += lo.s_b / n;
  }
  return a;
}

struct ModulationGrid {
  std::vector<nets::ScorePair> pairs;
  std::vector<Image> outputs;
  std::vector<std::vector<double>> distance;  // mean absolute difference
};

inline ModulationGrid modulation_grid(const nets::Models& models, const Image& lr, const std::vector<nets::ScorePair>& pairs) {
  ModulationGrid g;
  g.pairs = pairs;
  for (const auto& p : pairs) g.outputs.push_back(models.restore(lr, p));
  const std::size_t n = pairs.size();
  g.distance.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.distance[i][j] = g.distance[j][i] = mean_abs_diff(g.outputs[i], g.outputs[j]);
  return g;
}

/// Tiles equally sized images row-major into one image with a 2-pixel white gutter.
inline Image tile(const std::vector<Image>& images, std::size_t cols) {
  if (images.empty() || cols == 0) throw std::invalid_argument("tile: nothing to tile");
  const std::size_t h = height(images[0]), w = width(images[0]), gap = 2;
  const std::size_t rows = (images.size() + cols - 1) / cols;
  Image out = make_image(3, rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 1.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].shape() != images[0].shape()) throw ShapeError("tile: images differ in size");
    const std::size_t oy = (k / cols) * (h + gap), ox = (k % cols) * (w + gap);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(c, oy + y, ox + x) = images[k].at(c, y, x);
  }
  return out;
}

}  // namespace mmsr::eval
