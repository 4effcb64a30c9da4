#pragma once

// Desk-scale networks: the two-branch degradation estimator (UDEM), the
// condition network, and the affine-modulated x4 generator.
//
// Parameter counts (C, B: generator width/blocks; U: upsampler width;
// D, K: estimator width/blocks per branch; H: condition hidden width):
//   udem      = (27D + D) + 2 * (K * 2 * (9D^2 + D) + D + 1)
//   condition = B * (3H + 2CH + 2C)
//   generator = (27C + C) + B * 2 * (9C^2 + C) + (36CU + 4U) + (36U^2 + 4U)
//             + (9U^2 + U) + (27U + 3)

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmsr/autodiff.hpp"
#include "mmsr/degrade/filters.hpp"
#include "mmsr/image.hpp"
#include "mmsr/rng.hpp"
#include "mmsr/tensor.hpp"

namespace mmsr::nets {

using ad::Tape;
using ad::Var;
using V = Var<Real>;

/// General-noise and general-blur degradation scores. Raw network outputs are
/// unbounded; clamp only at presentation boundaries.
struct ScorePair {
  double s_n = 0;
  double s_b = 0;

  ScorePair clamped() const { return {std::clamp(s_n, 0.0, 1.0), std::clamp(s_b, 0.0, 1.0)}; }
  bool finite() const { return std::isfinite(s_n) && std::isfinite(s_b); }
  friend bool operator==(const ScorePair&, const ScorePair&) = default;
};

struct UdemConfig {
  std::size_t channels = 16;
  std::size_t blocks = 4;
};

struct GeneratorConfig {
  std::size_t channels = 32;
  std::size_t blocks = 4;
  std::size_t up_channels = 16;
};

struct ConditionConfig {
  std::size_t hidden = 32;
};

struct ModelConfig {
  UdemConfig udem;
  GeneratorConfig generator;
  ConditionConfig condition;
  double slope = 0.2;

  nlohmann::json to_json() const {
    return {{"udem", {{"channels", udem.channels}, {"blocks", udem.blocks}}},
            {"generator", {{"channels", generator.channels}, {"blocks", generator.blocks}, {"up_channels", generator.up_channels}}},
            {"condition", {{"hidden", condition.hidden}}},
            {"slope", slope}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    if (j.contains("udem")) {
      c.udem.channels = j["udem"].value("channels", c.udem.channels);
      c.udem.blocks = j["udem"].value("blocks", c.udem.blocks);
    }
    if (j.contains("generator")) {
      c.generator.channels = j["generator"].value("channels", c.generator.channels);
      c.generator.blocks = j["generator"].value("blocks", c.generator.blocks);
      c.generator.up_channels = j["generator"].value("up_channels", c.generator.up_channels);
    }
    if (j.contains("condition")) c.condition.hidden = j["condition"].value("hidden", c.condition.hidden);
    c.slope = j.value("slope", c.slope);
    if (c.udem.channels == 0 || c.udem.blocks == 0 || c.generator.channels == 0 || c.generator.blocks == 0 ||
        c.generator.up_channels == 0 || c.condition.hidden == 0)
      throw std::invalid_argument("model config: all widths and block counts must be positive");
    if (!(c.slope > 0 && c.slope < 1)) throw std::invalid_argument("model config: slope must lie in (0,1)");
    return c;
  }
};

/// Ordered list of named parameters. Layer structs hold indices into it.
class ParamStore {
 public:
  std::size_t add(std::string name, Shape shape) {
    params_.emplace_back(std::move(name), Tensor(std::move(shape)));
    return params_.size() - 1;
  }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const noexcept { return params_.size(); }
  std::vector<Parameter>& all() noexcept { return params_; }
  const std::vector<Parameter>& all() const noexcept { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Leaves on `t`; gradients flow into this store.
  std::vector<V> bind(Tape<Real>& t) {
    std::vector<V> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(t.param(p));
    return out;
  }
  /// Constant leaves on `t`; the store is never written.
  std::vector<V> bind(Tape<Real>& t) const {
    std::vector<V> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(t.param(p));
    return out;
  }

 private:
  std::vector<Parameter> params_;
};

struct ConvLayer {
  std::size_t w = 0, b = 0;
};
struct DenseLayer {
  std::size_t w = 0, b = 0;
};

namespace detail {

inline ConvLayer add_conv(ParamStore& s, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k = 3) {
  return {s.add(name + ".weight", Shape{cout, cin, k, k}), s.add(name + ".bias", Shape{cout})};
}
inline DenseLayer add_dense(ParamStore& s, const std::string& name, std::size_t in, std::size_t out) {
  return {s.add(name + ".weight", Shape{out, in}), s.add(name + ".bias", Shape{out})};
}

inline V conv(std::span<const V> p, const ConvLayer& l, V x) {
  const std::size_t k = p[l.w].shape()[2];
  return ad::conv2d(x, p[l.w], p[l.b], 1, k / 2, ad::Pad::reflect);
}
inline V dense(std::span<const V> p, const DenseLayer& l, V x) { return ad::dense(x, p[l.w], p[l.b]); }

// Kaiming-normal fan-in init for leaky-ReLU nets, times `gain`.
inline void init_conv(ParamStore& s, const ConvLayer& l, Rng& rng, double slope, double gain) {
  auto& w = s[l.w].value;
  const double fan_in = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
  std::normal_distribution<double> n(0.0, gain * std::sqrt(2.0 / ((1 + slope * slope) * fan_in)));
  for (auto& v : w.values()) v = n(rng);
  s[l.b].value.fill(0);
}

inline void init_dense_uniform(ParamStore& s, const DenseLayer& l, Rng& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : s[l.w].value.values()) v = u(rng);
  s[l.b].value.fill(0);
}

/// Covers an h x w grid with tiles of at most `tile` pixels per side. Each call gets
/// the tile rectangle and that rectangle grown by `margin`, clipped to the grid.
struct TileRect {
  std::size_t y0, x0, h, w;     // interior
  std::size_t py0, px0, ph, pw; // padded
};

template <class F>
void for_each_tile(std::size_t h, std::size_t w, std::size_t tile, std::size_t margin, F&& f) {
  for (std::size_t y0 = 0; y0 < h; y0 += tile)
    for (std::size_t x0 = 0; x0 < w; x0 += tile) {
      TileRect r{y0, x0, std::min(tile, h - y0), std::min(tile, w - x0), 0, 0, 0, 0};
      r.py0 = y0 > margin ? y0 - margin : 0;
      r.px0 = x0 > margin ? x0 - margin : 0;
      r.ph = std::min(h, y0 + r.h + margin) - r.py0;
      r.pw = std::min(w, x0 + r.w + margin) - r.px0;
      f(r);
    }
}

}  // namespace detail

// Inputs with a side above this are processed in overlapping tiles so that
// inference memory stays bounded.
inline constexpr std::size_t kInferenceTile = 128;

// ---------------------------------------------------------------------------
// UDEM
// ---------------------------------------------------------------------------

struct ScoreVars {
  V s_n, s_b;
};

class Udem {
 public:
  explicit Udem(UdemConfig cfg = {}, double slope = 0.2) : cfg_(cfg), slope_(slope) {
    const std::size_t d = cfg_.channels;
    stem_ = detail::add_conv(store_, "udem.stem", 3, d);
    for (int b = 0; b < 2; ++b) {
      const std::string br = b == 0 ? "udem.noise" : "udem.blur";
      Branch branch;
      for (std::size_t i = 0; i < cfg_.blocks; ++i) {
        const std::string bn = br + ".block" + std::to_string(i);
        branch.blocks.push_back({detail::add_conv(store_, bn + ".conv1", d, d), detail::add_conv(store_, bn + ".conv2", d, d)});
      }
      branch.head = detail::add_dense(store_, br + ".head", d, 1);
      branches_[b] = std::move(branch);
    }
  }

  void init(Rng& rng) {
    detail::init_conv(store_, stem_, rng, slope_, 1.0);
    for (auto& br : branches_) {
      for (auto& blk : br.blocks) {
        detail::init_conv(store_, blk.first, rng, slope_, 1.0);
        detail::init_conv(store_, blk.second, rng, slope_, 0.1);
      }
      detail::init_dense_uniform(store_, br.head, rng, 0.1);
    }
  }

  /// Per-branch feature maps right before pooling.
  std::array<V, 2> features(std::span<const V> p, V img) const {
    if (img.shape().size() != 3 || img.shape()[0] != 3) throw ShapeError("udem: expected a [3,H,W] image");
    if (img.shape()[1] < 3 || img.shape()[2] < 3) throw ShapeError("udem: image must be at least 3x3");
    V stem = ad::leaky_relu(detail::conv(p, stem_, img), slope_);
    std::array<V, 2> out;
    for (int b = 0; b < 2; ++b) {
      V x = stem;
      for (const auto& blk : branches_[b].blocks) {
        V r = detail::conv(p, blk.second, ad::leaky_relu(detail::conv(p, blk.first, x), slope_));
        x = ad::add(x, r);
      }
      out[b] = ad::leaky_relu(x, slope_);
    }
    return out;
  }

  /// Scores for one [3,H,W] image; `p` comes from bind().
  ScoreVars forward(std::span<const V> p, V img) const {
    auto f = features(p, img);
    return {detail::dense(p, branches_[0].head, ad::global_avg_pool(f[0])), detail::dense(p, branches_[1].head, ad::global_avg_pool(f[1]))};
  }

  ScorePair score(const Image& img, std::size_t tile = kInferenceTile) const {
    require_image(img, "udem");
    if (height(img) <= tile && width(img) <= tile) {
      Tape<Real> t;
      auto p = store_.bind(t);
      auto s = forward(p, t.constant(img));
      return {s.s_n.item(), s.s_b.item()};
    }
    // Pooled features are a plain mean over pixels, so they can be summed tile by tile.
    const std::size_t d = cfg_.channels;
    std::vector<double> pooled[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    detail::for_each_tile(height(img), width(img), tile, receptive_radius(), [&](const detail::TileRect& r) {
      Tape<Real> t;
      auto p = store_.bind(t);
      auto f = features(p, t.constant(crop(img, r.py0, r.px0, r.ph, r.pw)));
      for (int b = 0; b < 2; ++b) {
        const auto& m = f[b].value();
        for (std::size_t c = 0; c < d; ++c)
          for (std::size_t y = 0; y < r.h; ++y)
            for (std::size_t x = 0; x < r.w; ++x) pooled[b][c] += m[(c * r.ph + r.y0 - r.py0 + y) * r.pw + r.x0 - r.px0 + x];
      }
    });
    const double n = static_cast<double>(height(img) * width(img));
    double s[2];
    for (int b = 0; b < 2; ++b) {
      const auto& w = store_[branches_[b].head.w].value;
      s[b] = store_[branches_[b].head.b].value[0];
      for (std::size_t c = 0; c < d; ++c) s[b] += w[c] * (pooled[b][c] / n);
    }
    return {s[0], s[1]};
  }

  std::size_t receptive_radius() const noexcept { return 1 + 2 * cfg_.blocks; }

  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  const UdemConfig& config() const noexcept { return cfg_; }

  /// Parameter indices belonging to branch 0 (noise) or 1 (blur).
  std::vector<std::size_t> branch_params(int b) const {
    std::vector<std::size_t> out;
    for (const auto& blk : branches_[b].blocks) out.insert(out.end(), {blk.first.w, blk.first.b, blk.second.w, blk.second.b});
    out.insert(out.end(), {branches_[b].head.w, branches_[b].head.b});
    return out;
  }

  static std::size_t expected_count(const UdemConfig& c) {
    const std::size_t d = c.channels;
    return (27 * d + d) + 2 * (c.blocks * 2 * (9 * d * d + d) + d + 1);
  }

 private:
  struct Branch {
    std::vector<std::pair<ConvLayer, ConvLayer>> blocks;
    DenseLayer head;
  };
  UdemConfig cfg_;
  double slope_;
  ParamStore store_;
  ConvLayer stem_;
  Branch branches_[2];
};

// ---------------------------------------------------------------------------
// Condition network
// ---------------------------------------------------------------------------

struct Modulation {
  V alpha, beta;
};

class ConditionNet {
 public:
  ConditionNet(ConditionConfig cfg, std::size_t sites, std::size_t channels, double slope = 0.2)
      : cfg_(cfg), channels_(channels), slope_(slope) {
    for (std::size_t i = 0; i < sites; ++i) {
      const std::string n = "cond.site" + std::to_string(i);
      sites_.push_back({detail::add_dense(store_, n + ".fc1", 2, cfg_.hidden), detail::add_dense(store_, n + ".fc2", cfg_.hidden, 2 * channels)});
    }
  }

  /// Near-identity start: final layer weights zero, bias gives alpha = 1, beta = 0.
  void init(Rng& rng) {
    for (auto& s : sites_) {
      detail::init_dense_uniform(store_, s.first, rng, 1.0 / std::sqrt(2.0));
      store_[s.second.w].value.fill(0);
      auto& b = store_[s.second.b].value;
      for (std::size_t c = 0; c < 2 * channels_; ++c) b[c] = c < channels_ ? 1.0 : 0.0;
    }
  }

  /// One (alpha, beta) pair per modulation site; `scores` is a [2] tensor (s_n, s_b).
  std::vector<Modulation> forward(std::span<const V> p, V scores) const {
    if (scores.shape() != Shape{2}) throw ShapeError("condition: scores must be [2]");
    for (Real v : scores.value())
      if (!std::isfinite(v)) throw std::invalid_argument("condition: scores must be finite");
    std::vector<Modulation> out;
    for (const auto& s : sites_) {
      V h = ad::leaky_relu(detail::dense(p, s.first, scores), slope_);
      V z = detail::dense(p, s.second, h);
      out.push_back({ad::slice(z, 0, channels_), ad::slice(z, channels_, channels_)});
    }
    return out;
  }

  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  std::size_t sites() const noexcept { return sites_.size(); }
  std::size_t channels() const noexcept { return channels_; }

  static std::size_t expected_count(const ConditionConfig& c, std::size_t sites, std::size_t channels) {
    return sites * (3 * c.hidden + 2 * channels * c.hidden + 2 * channels);
  }

 private:
  ConditionConfig cfg_;
  std::size_t channels_;
  double slope_;
  ParamStore store_;
  std::vector<std::pair<DenseLayer, DenseLayer>> sites_;
};

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg = {}, double slope = 0.2) : cfg_(cfg), slope_(slope) {
    const std::size_t c = cfg_.channels, u = cfg_.up_channels;
    head_ = detail::add_conv(store_, "gen.head", 3, c);
    for (std::size_t i = 0; i < cfg_.blocks; ++i) {
      const std::string n = "gen.block" + std::to_string(i);
      blocks_.push_back({detail::add_conv(store_, n + ".conv1", c, c), detail::add_conv(store_, n + ".conv2", c, c)});
    }
    up1_ = detail::add_conv(store_, "gen.up1", c, 4 * u);
    up2_ = detail::add_conv(store_, "gen.up2", u, 4 * u);
    tail1_ = detail::add_conv(store_, "gen.tail1", u, u);
    tail2_ = detail::add_conv(store_, "gen.tail2", u, 3);
  }

  void init(Rng& rng) {
    detail::init_conv(store_, head_, rng, slope_, 1.0);
    for (auto& b : blocks_) {
      detail::init_conv(store_, b.first, rng, slope_, 1.0);
      detail::init_conv(store_, b.second, rng, slope_, 0.1);
    }
    detail::init_conv(store_, up1_, rng, slope_, 1.0);
    detail::init_conv(store_, up2_, rng, slope_, 1.0);
    detail::init_conv(store_, tail1_, rng, slope_, 1.0);
    detail::init_conv(store_, tail2_, rng, slope_, 0.1);
  }

  /// x4 output in the unclipped real range. Each block's output F_i becomes
  /// F_i * alpha_i + beta_i; an empty `mods` runs the unconditioned network.
  V forward(std::span<const V> p, V lr, const std::vector<Modulation>& mods) const {
    if (!mods.empty() && mods.size() != blocks_.size())
      throw std::invalid_argument("generator: got " + std::to_string(mods.size()) + " modulations for " + std::to_string(blocks_.size()) + " blocks");
    if (lr.shape().size() != 3 || lr.shape()[0] != 3) throw ShapeError("generator: expected a [3,H,W] image");
    V feat0 = detail::conv(p, head_, lr);
    V x = feat0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      V r = detail::conv(p, blocks_[i].second, ad::leaky_relu(detail::conv(p, blocks_[i].first, x), slope_));
      x = ad::add(x, r);
      if (!mods.empty()) x = ad::broadcast_affine(x, mods[i].alpha, mods[i].beta);
    }
    x = ad::add(x, feat0);
    x = ad::leaky_relu(ad::pixel_shuffle(detail::conv(p, up1_, x), 2), slope_);
    x = ad::leaky_relu(ad::pixel_shuffle(detail::conv(p, up2_, x), 2), slope_);
    x = ad::leaky_relu(detail::conv(p, tail1_, x), slope_);
    x = detail::conv(p, tail2_, x);
    // Global skip from the bicubic-upsampled input.
    const Image in = lr.tensor();
    const Image base = degrade::resize_to(in, degrade::ResizeMode::bicubic, 4 * height(in), 4 * width(in));
    return ad::add(x, lr.tape->constant(base));
  }

  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  std::size_t blocks() const noexcept { return blocks_.size(); }
  std::size_t channels() const noexcept { return cfg_.channels; }
  /// LR pixels of context that influence one output pixel (convolutions plus the bicubic skip).
  std::size_t receptive_radius() const noexcept { return 1 + 2 * cfg_.blocks + 1 + 1 + 1 + 2; }

  static std::size_t expected_count(const GeneratorConfig& g) {
    const std::size_t c = g.channels, u = g.up_channels;
    return (27 * c + c) + g.blocks * 2 * (9 * c * c + c) + (36 * c * u + 4 * u) + (36 * u * u + 4 * u) + (9 * u * u + u) + (27 * u + 3);
  }

 private:
  GeneratorConfig cfg_;
  double slope_;
  ParamStore store_;
  ConvLayer head_;
  std::vector<std::pair<ConvLayer, ConvLayer>> blocks_;
  ConvLayer up1_, up2_, tail1_, tail2_;
};

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// All three networks built from one ModelConfig.
struct Models {
  ModelConfig config;
  Udem udem;
  ConditionNet condition;
  Generator generator;

  explicit Models(ModelConfig cfg = {})
      : config(cfg),
        udem(cfg.udem, cfg.slope),
        condition(cfg.condition, cfg.generator.blocks, cfg.generator.channels, cfg.slope),
        generator(cfg.generator, cfg.slope) {}

  /// Deterministic initialization from a seed.
  void init(std::uint64_t seed) {
    Rng r1(derive_seed(seed, {1})), r2(derive_seed(seed, {2})), r3(derive_seed(seed, {3}));
    udem.init(r1);
    condition.init(r2);
    generator.init(r3);
  }

  /// Every parameter in checkpoint/optimizer order: udem, condition, generator.
  std::vector<Parameter*> all_params() {
    std::vector<Parameter*> out;
    for (auto* s : {&udem.params(), &condition.params(), &generator.params()})
      for (auto& p : s->all()) out.push_back(&p);
    return out;
  }
  std::vector<const Parameter*> all_params() const {
    std::vector<const Parameter*> out;
    for (const auto* s : {&udem.params(), &condition.params(), &generator.params()})
      for (const auto& p : s->all()) out.push_back(&p);
    return out;
  }

  std::size_t parameter_count() const { return udem.params().count() + condition.params().count() + generator.params().count(); }

  /// Restores x4 given explicit scores. Output is clipped to [0,1].
  Image restore(const Image& lr, ScorePair scores, std::size_t tile = kInferenceTile) const {
    if (!scores.finite()) throw std::invalid_argument("restore: scores must be finite");
    require_image(lr, "restore");
    auto run = [&](const Image& in) {
      Tape<Real> t;
      auto pc = condition.params().bind(t);
      auto pg = generator.params().bind(t);
      auto mods = condition.forward(pc, t.constant(Shape{2}, {scores.s_n, scores.s_b}));
      return generator.forward(pg, t.constant(in), mods).tensor();
    };
    if (height(lr) <= tile && width(lr) <= tile) return clip01(run(lr));
    Image out = make_image(3, 4 * height(lr), 4 * width(lr));
    detail::for_each_tile(height(lr), width(lr), tile, generator.receptive_radius(), [&](const detail::TileRect& r) {
      const Image part = run(crop(lr, r.py0, r.px0, r.ph, r.pw));
      const std::size_t oy = 4 * (r.y0 - r.py0), ox = 4 * (r.x0 - r.px0);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4 * r.h; ++y)
          for (std::size_t x = 0; x < 4 * r.w; ++x) out.at(c, 4 * r.y0 + y, 4 * r.x0 + x) = part.at(c, oy + y, ox + x);
    });
    return clip01(std::move(out));
  }

  /// x4 output with every alpha = 1 and beta = 0 injected (unclipped).
  Image restore_unconditioned(const Image& lr) const {
    Tape<Real> t;
    auto pg = generator.params().bind(t);
    return generator.forward(pg, t.constant(lr), {}).tensor();
  }
};

}  // namespace mmsr::nets
