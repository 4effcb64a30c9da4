#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "mmsr/degrade/filters.hpp"
#include "mmsr/degrade/jpeg.hpp"
#include "mmsr/degrade/kernels.hpp"
#include "mmsr/degrade/noise.hpp"
#include "mmsr/image.hpp"
#include "mmsr/rng.hpp"

namespace mmsr::degrade {

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

struct BlurIso {
  double sigma = 1.0;
  int ksize = 7;
};
struct BlurAniso {
  double sigma_x = 1.0, sigma_y = 1.0, theta = 0.0;
  int ksize = 7;
};
struct Sinc {
  double cutoff = std::numbers::pi / 2;
  int ksize = 7;
};
struct Resize {
  ResizeMode mode = ResizeMode::bicubic;
  double scale = 1.0;
  /// Scale applies to the recipe's source extents rather than the current image.
  bool from_source = false;
};
struct GaussianNoise {
  double sigma = 0.0;  // [0,1] intensity scale
  bool gray = false;
};
struct PoissonNoise {
  double scale = 1.0;
  bool gray = false;
};
struct Jpeg {
  int quality = 95;
};

using StageOp = std::variant<BlurIso, BlurAniso, Sinc, Resize, GaussianNoise, PoissonNoise, Jpeg>;

/// Canonical pipeline positions. A stage's noise stream is derived from
/// (recipe seed, slot), so inserting or rescaling other stages never shifts it.
enum Slot : int {
  kRound1Blur = 10,
  kRound1Resize = 11,
  kRound1Noise = 12,
  kRound1Jpeg = 13,
  kRound2Blur = 20,
  kRound2Resize = 21,
  kRound2Noise = 22,
  kRound2Jpeg = 23,
  kFinalResize = 30,
  kFinalJpeg = 31,
  kFinalSinc = 32,
};

struct DegradationStage {
  int slot = 0;
  StageOp op;
};

inline bool is_gblur(const StageOp& op) {
  return std::holds_alternative<BlurIso>(op) || std::holds_alternative<BlurAniso>(op) || std::holds_alternative<Sinc>(op);
}
inline bool is_noise(const StageOp& op) {
  return std::holds_alternative<GaussianNoise>(op) || std::holds_alternative<PoissonNoise>(op);
}
inline bool is_gnoise(const StageOp& op) { return is_noise(op) || std::holds_alternative<Jpeg>(op); }

/// Validates the per-stage parameter invariants; throws std::invalid_argument.
inline void validate(const StageOp& op) {
  auto odd = [](int k) { return k >= 3 && k % 2 == 1; };
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BlurIso>) {
          if (!(s.sigma > 0) || !odd(s.ksize)) throw std::invalid_argument("BlurIso: sigma > 0 and odd ksize >= 3 required");
        } else if constexpr (std::is_same_v<S, BlurAniso>) {
          if (!(s.sigma_x > 0 && s.sigma_y > 0) || !odd(s.ksize)) throw std::invalid_argument("BlurAniso: sigmas > 0 and odd ksize >= 3 required");
        } else if constexpr (std::is_same_v<S, Sinc>) {
          if (!(s.cutoff > 0 && s.cutoff <= std::numbers::pi) || !odd(s.ksize)) throw std::invalid_argument("Sinc: cutoff in (0,pi] and odd ksize >= 3 required");
        } else if constexpr (std::is_same_v<S, Resize>) {
          if (!(s.scale > 0)) throw std::invalid_argument("Resize: scale must be positive");
        } else if constexpr (std::is_same_v<S, GaussianNoise>) {
          if (!(s.sigma >= 0)) throw std::invalid_argument("GaussianNoise: sigma must be non-negative");
        } else if constexpr (std::is_same_v<S, PoissonNoise>) {
          if (!(s.scale > 0)) throw std::invalid_argument("PoissonNoise: scale must be positive");
        } else if constexpr (std::is_same_v<S, Jpeg>) {
          if (s.quality < 1 || s.quality > 100) throw std::invalid_argument("Jpeg: quality must lie in [1,100]");
        }
      },
      op);
}

// ---------------------------------------------------------------------------
// Recipe
// ---------------------------------------------------------------------------

struct DegradationRecipe {
  std::vector<DegradationStage> stages;
  double final_scale = 0.25;
  std::uint64_t seed = 0;
  bool jpeg_chroma_subsampling = true;

  friend bool operator==(const DegradationRecipe& a, const DegradationRecipe& b) {
    return a.to_json() == b.to_json();
  }

  nlohmann::json to_json() const;
  static DegradationRecipe from_json(const nlohmann::json& j);
};

/// Applies one stage to `img`; `source_h`/`source_w` are the recipe input extents.
inline Image apply_stage(const Image& img, const DegradationStage& stage, std::uint64_t recipe_seed, std::size_t source_h,
                         std::size_t source_w, bool chroma_subsampling) {
  validate(stage.op);
  Rng rng(derive_seed(recipe_seed, {static_cast<std::uint64_t>(stage.slot)}));
  return std::visit(
      [&](const auto& s) -> Image {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BlurIso>) {
          return convolve(img, gaussian_kernel_iso(s.sigma, s.ksize));
        } else if constexpr (std::is_same_v<S, BlurAniso>) {
          return convolve(img, gaussian_kernel_aniso(s.sigma_x, s.sigma_y, s.theta, s.ksize));
        } else if constexpr (std::is_same_v<S, Sinc>) {
          return clip01(convolve(img, sinc_kernel(s.cutoff, s.ksize)));
        } else if constexpr (std::is_same_v<S, Resize>) {
          const std::size_t h = s.from_source ? source_h : height(img);
          const std::size_t w = s.from_source ? source_w : width(img);
          return clip01(resize_to(img, s.mode, std::max<std::size_t>(1, scaled_extent(h, s.scale)),
                                  std::max<std::size_t>(1, scaled_extent(w, s.scale))));
        } else if constexpr (std::is_same_v<S, GaussianNoise>) {
          return add_gaussian_noise(img, s.sigma, s.gray, rng);
        } else if constexpr (std::is_same_v<S, PoissonNoise>) {
          return add_poisson_noise(img, s.scale, s.gray, rng);
        } else {
          return jpeg_compress(img, s.quality, JpegOptions{chroma_subsampling});
        }
      },
      stage.op);
}

/// Runs every stage in order. Bit-deterministic for a given (recipe, input).
inline Image apply_recipe(const Image& hr, const DegradationRecipe& recipe) {
  require_image(hr, "apply_recipe");
  Image cur = clip01(hr);
  for (const auto& st : recipe.stages)
    cur = apply_stage(cur, st, recipe.seed, height(hr), width(hr), recipe.jpeg_chroma_subsampling);
  return cur;
}

// ---------------------------------------------------------------------------
// Intensity measures used to order recipes along the two controllable axes
// ---------------------------------------------------------------------------

/// Equivalent noise standard deviation (0-255 scale) of Poisson noise on mid-gray.
inline double poisson_equivalent_sigma(double scale) { return 255.0 * std::sqrt(0.5 / (255.0 * scale)); }

inline double gblur_intensity(const StageOp& op) {
  if (auto* b = std::get_if<BlurIso>(&op)) return b->sigma;
  if (auto* b = std::get_if<BlurAniso>(&op)) return std::sqrt(b->sigma_x * b->sigma_y);
  if (auto* s = std::get_if<Sinc>(&op)) return std::numbers::pi / s->cutoff;
  return 0;
}

inline double gnoise_intensity(const StageOp& op) {
  if (auto* g = std::get_if<GaussianNoise>(&op)) return 255.0 * g->sigma;
  if (auto* p = std::get_if<PoissonNoise>(&op)) return poisson_equivalent_sigma(p->scale);
  if (auto* j = std::get_if<Jpeg>(&op)) return 100.0 - j->quality;
  return 0;
}

inline double gblur_intensity(const DegradationRecipe& r) {
  double s = 0;
  for (const auto& st : r.stages) s += gblur_intensity(st.op);
  return s;
}

inline double gnoise_intensity(const DegradationRecipe& r) {
  double s = 0;
  for (const auto& st : r.stages) s += gnoise_intensity(st.op);
  return s;
}

// ---------------------------------------------------------------------------
// Configuration and sampling
// ---------------------------------------------------------------------------

struct Range {
  double lo = 0, hi = 0;
  double draw(Rng& rng) const { return uniform(rng, lo, hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
  void check(const char* name) const {
    if (!(lo <= hi)) throw std::invalid_argument(std::string("config range ") + name + " has lo > hi");
  }
};

/// Parameters of one {blur -> resize -> noise -> JPEG} round.
struct RoundConfig {
  double blur_prob = 1.0;
  double sinc_prob = 0.1;   // given blur: 2D sinc instead of a Gaussian
  double aniso_prob = 0.5;  // given Gaussian: anisotropic instead of isotropic
  Range blur_sigma{0.2, 3.0};
  Range ksize{7, 21};
  Range sinc_cutoff{std::numbers::pi / 3, std::numbers::pi};

  double resize_prob = 1.0;
  Range resize_scale{0.3, 1.5};

  double noise_prob = 1.0;
  double gaussian_prob = 0.5;  // else Poisson
  double gray_prob = 0.4;
  Range noise_sigma{1, 30};  // 0-255 scale
  Range poisson_scale{0.25, 10};

  double jpeg_prob = 1.0;
  Range jpeg_quality{30, 95};
};

/// Shrinks a range toward its mild end, keeping `fraction` of its extent.
inline Range shrink_toward(Range r, double mild, double fraction) {
  return Range{mild + (r.lo - mild) * fraction, mild + (r.hi - mild) * fraction};
}

inline RoundConfig second_round_from(const RoundConfig& r1, double fraction = 0.8) {
  RoundConfig r2 = r1;
  r2.blur_prob = 0.8;
  r2.blur_sigma = shrink_toward(r1.blur_sigma, r1.blur_sigma.lo, fraction);
  r2.sinc_cutoff = shrink_toward(r1.sinc_cutoff, r1.sinc_cutoff.hi, fraction);
  r2.resize_scale = shrink_toward(r1.resize_scale, 1.0, fraction);
  r2.noise_sigma = shrink_toward(r1.noise_sigma, r1.noise_sigma.lo, fraction);
  r2.poisson_scale = shrink_toward(r1.poisson_scale, r1.poisson_scale.hi, fraction);
  r2.jpeg_quality = shrink_toward(r1.jpeg_quality, r1.jpeg_quality.hi, fraction);
  r2.jpeg_quality.lo = std::round(r2.jpeg_quality.lo);
  return r2;
}

struct DegradeConfig {
  RoundConfig round1{};
  RoundConfig round2 = second_round_from(RoundConfig{});
  Range final_jpeg_quality{30, 95};
  double final_sinc_prob = 0.5;
  Range final_sinc_cutoff{std::numbers::pi / 3, std::numbers::pi};
  double final_scale = 0.25;
  /// Contrast-group separation factors for Gblur (c1) and Gnoise (c3).
  Range rho_blur{1.5, 3.0};
  Range rho_noise{1.5, 3.0};
  /// Probability that a contrast group raises Gnoise through JPEG quality
  /// rather than through the additive noise stages.
  double jpeg_contrast_prob = 0.5;
  bool jpeg_chroma_subsampling = true;

  void validate() const {
    for (const auto* r : {&round1, &round2}) {
      r->blur_sigma.check("blur_sigma");
      r->ksize.check("ksize");
      r->sinc_cutoff.check("sinc_cutoff");
      r->resize_scale.check("resize_scale");
      r->noise_sigma.check("noise_sigma");
      r->poisson_scale.check("poisson_scale");
      r->jpeg_quality.check("jpeg_quality");
      if (!(r->blur_sigma.lo > 0) || !(r->resize_scale.lo > 0) || !(r->poisson_scale.lo > 0) || r->noise_sigma.lo < 0)
        throw std::invalid_argument("config: sigma/scale ranges must be positive");
      if (r->ksize.lo < 3) throw std::invalid_argument("config: ksize must be >= 3");
      if (r->jpeg_quality.lo < 1 || r->jpeg_quality.hi > 100) throw std::invalid_argument("config: jpeg quality outside [1,100]");
      if (!(r->sinc_cutoff.lo > 0) || r->sinc_cutoff.hi > std::numbers::pi) throw std::invalid_argument("config: sinc cutoff outside (0,pi]");
    }
    final_jpeg_quality.check("final_jpeg_quality");
    final_sinc_cutoff.check("final_sinc_cutoff");
    rho_blur.check("rho_blur");
    rho_noise.check("rho_noise");
    if (rho_blur.lo < 1 || rho_noise.lo < 1) throw std::invalid_argument("config: rho factors must be >= 1");
    if (!(jpeg_contrast_prob >= 0 && jpeg_contrast_prob <= 1)) throw std::invalid_argument("config: jpeg_contrast_prob outside [0,1]");
    if (!(final_scale > 0)) throw std::invalid_argument("config: final_scale must be positive");
  }

  nlohmann::json to_json() const;
  static DegradeConfig from_json(const nlohmann::json& j);
};

inline int draw_odd(Rng& rng, Range r) {
  const int lo = static_cast<int>(std::ceil(r.lo)) | 1;
  const int hi = static_cast<int>(std::floor(r.hi));
  if (hi < lo) return lo;
  const int n = (hi - lo) / 2;
  return lo + 2 * std::uniform_int_distribution<int>(0, n)(rng);
}

inline int largest_odd(Range r) {
  int k = static_cast<int>(std::floor(r.hi));
  if (k % 2 == 0) --k;
  return std::max(k, 3);
}

namespace detail {

/// `grid_scale` > 0 makes the round's resize relative to source * grid_scale
/// (the second round works around the LR grid); 0 resizes the current image.
inline void sample_round(const RoundConfig& rc, int base_slot, double grid_scale, Rng& rng, std::vector<DegradationStage>& out) {
  if (bernoulli(rng, rc.blur_prob)) {
    const int k = draw_odd(rng, rc.ksize);
    if (bernoulli(rng, rc.sinc_prob)) {
      out.push_back({base_slot + 0, Sinc{rc.sinc_cutoff.draw(rng), k}});
    } else if (bernoulli(rng, rc.aniso_prob)) {
      const double sx = rc.blur_sigma.draw(rng), sy = rc.blur_sigma.draw(rng);
      out.push_back({base_slot + 0, BlurAniso{sx, sy, uniform(rng, -std::numbers::pi, std::numbers::pi), k}});
    } else {
      out.push_back({base_slot + 0, BlurIso{rc.blur_sigma.draw(rng), k}});
    }
  }
  if (bernoulli(rng, rc.resize_prob)) {
    static constexpr ResizeMode modes[] = {ResizeMode::area, ResizeMode::bilinear, ResizeMode::bicubic};
    const auto m = modes[std::uniform_int_distribution<int>(0, 2)(rng)];
    const double sc = rc.resize_scale.draw(rng);
    out.push_back({base_slot + 1, grid_scale > 0 ? Resize{m, grid_scale * sc, true} : Resize{m, sc, false}});
  }
  if (bernoulli(rng, rc.noise_prob)) {
    const bool gray = bernoulli(rng, rc.gray_prob);
    if (bernoulli(rng, rc.gaussian_prob))
      out.push_back({base_slot + 2, GaussianNoise{rc.noise_sigma.draw(rng) / 255.0, gray}});
    else
      out.push_back({base_slot + 2, PoissonNoise{rc.poisson_scale.draw(rng), gray}});
  }
  if (bernoulli(rng, rc.jpeg_prob))
    out.push_back({base_slot + 3, Jpeg{static_cast<int>(std::lround(rc.jpeg_quality.draw(rng)))}});
}

}  // namespace detail

/// Two randomized rounds, then resize to final_scale, a final JPEG and an optional final sinc.
inline DegradationRecipe sample_recipe(const DegradeConfig& cfg, Rng& rng) {
  cfg.validate();
  DegradationRecipe r;
  r.final_scale = cfg.final_scale;
  r.jpeg_chroma_subsampling = cfg.jpeg_chroma_subsampling;
  r.seed = rng();
  detail::sample_round(cfg.round1, kRound1Blur, 0.0, rng, r.stages);
  detail::sample_round(cfg.round2, kRound2Blur, cfg.final_scale, rng, r.stages);
  static constexpr ResizeMode modes[] = {ResizeMode::area, ResizeMode::bilinear, ResizeMode::bicubic};
  r.stages.push_back({kFinalResize, Resize{modes[std::uniform_int_distribution<int>(0, 2)(rng)], cfg.final_scale, true}});
  r.stages.push_back({kFinalJpeg, Jpeg{static_cast<int>(std::lround(cfg.final_jpeg_quality.draw(rng)))}});
  if (bernoulli(rng, cfg.final_sinc_prob))
    r.stages.push_back({kFinalSinc, Sinc{cfg.final_sinc_cutoff.draw(rng), draw_odd(rng, cfg.round2.ksize)}});
  return r;
}

/// The fixed clean downsample: bicubic resize to final_scale and nothing else.
inline DegradationRecipe clean_recipe(double final_scale, std::uint64_t seed = 0) {
  DegradationRecipe r;
  r.final_scale = final_scale;
  r.seed = seed;
  r.stages.push_back({kFinalResize, Resize{ResizeMode::bicubic, final_scale, true}});
  return r;
}

/// Every stage present at the strongest configured Gnoise and Gblur setting.
inline DegradationRecipe maximal_recipe(const DegradeConfig& cfg, std::uint64_t seed) {
  DegradationRecipe r;
  r.final_scale = cfg.final_scale;
  r.seed = seed;
  r.jpeg_chroma_subsampling = cfg.jpeg_chroma_subsampling;
  auto add_round = [&](const RoundConfig& rc, int base, double grid_scale) {
    r.stages.push_back({base + 0, BlurIso{rc.blur_sigma.hi, largest_odd(rc.ksize)}});
    const double sc = rc.resize_scale.lo;
    r.stages.push_back({base + 1, grid_scale > 0 ? Resize{ResizeMode::area, grid_scale * sc, true} : Resize{ResizeMode::area, sc, false}});
    r.stages.push_back({base + 2, GaussianNoise{rc.noise_sigma.hi / 255.0, false}});
    r.stages.push_back({base + 3, Jpeg{static_cast<int>(std::ceil(rc.jpeg_quality.lo))}});
  };
  add_round(cfg.round1, kRound1Blur, 0.0);
  add_round(cfg.round2, kRound2Blur, cfg.final_scale);
  r.stages.push_back({kFinalResize, Resize{ResizeMode::area, cfg.final_scale, true}});
  r.stages.push_back({kFinalJpeg, Jpeg{static_cast<int>(std::ceil(cfg.final_jpeg_quality.lo))}});
  r.stages.push_back({kFinalSinc, Sinc{cfg.final_sinc_cutoff.lo, largest_odd(cfg.round2.ksize)}});
  return r;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json stage_to_json(const DegradationStage& st) {
  nlohmann::json j;
  j["slot"] = st.slot;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BlurIso>) {
          j["type"] = "blur_iso";
          j["sigma"] = s.sigma;
          j["ksize"] = s.ksize;
        } else if constexpr (std::is_same_v<S, BlurAniso>) {
          j["type"] = "blur_aniso";
          j["sigma_x"] = s.sigma_x;
          j["sigma_y"] = s.sigma_y;
          j["theta"] = s.theta;
          j["ksize"] = s.ksize;
        } else if constexpr (std::is_same_v<S, Sinc>) {
          j["type"] = "sinc";
          j["cutoff"] = s.cutoff;
          j["ksize"] = s.ksize;
        } else if constexpr (std::is_same_v<S, Resize>) {
          j["type"] = "resize";
          j["mode"] = std::string(to_string(s.mode));
          j["scale"] = s.scale;
          j["from_source"] = s.from_source;
        } else if constexpr (std::is_same_v<S, GaussianNoise>) {
          j["type"] = "gaussian_noise";
          j["sigma"] = s.sigma;
          j["gray"] = s.gray;
        } else if constexpr (std::is_same_v<S, PoissonNoise>) {
          j["type"] = "poisson_noise";
          j["scale"] = s.scale;
          j["gray"] = s.gray;
        } else {
          j["type"] = "jpeg";
          j["quality"] = s.quality;
        }
      },
      st.op);
  return j;
}

inline DegradationStage stage_from_json(const nlohmann::json& j) {
  DegradationStage st;
  st.slot = j.at("slot").get<int>();
  const auto type = j.at("type").get<std::string>();
  if (type == "blur_iso")
    st.op = BlurIso{j.at("sigma").get<double>(), j.at("ksize").get<int>()};
  else if (type == "blur_aniso")
    st.op = BlurAniso{j.at("sigma_x").get<double>(), j.at("sigma_y").get<double>(), j.at("theta").get<double>(), j.at("ksize").get<int>()};
  else if (type == "sinc")
    st.op = Sinc{j.at("cutoff").get<double>(), j.at("ksize").get<int>()};
  else if (type == "resize")
    st.op = Resize{resize_mode_from_string(j.at("mode").get<std::string>()), j.at("scale").get<double>(), j.value("from_source", false)};
  else if (type == "gaussian_noise")
    st.op = GaussianNoise{j.at("sigma").get<double>(), j.value("gray", false)};
  else if (type == "poisson_noise")
    st.op = PoissonNoise{j.at("scale").get<double>(), j.value("gray", false)};
  else if (type == "jpeg")
    st.op = Jpeg{j.at("quality").get<int>()};
  else
    throw std::invalid_argument("unknown degradation stage type '" + type + "'");
  validate(st.op);
  return st;
}

inline nlohmann::json DegradationRecipe::to_json() const {
  nlohmann::json j;
  j["final_scale"] = final_scale;
  j["seed"] = seed;
  j["jpeg_chroma_subsampling"] = jpeg_chroma_subsampling;
  j["stages"] = nlohmann::json::array();
  for (const auto& st : stages) j["stages"].push_back(stage_to_json(st));
  return j;
}

inline DegradationRecipe DegradationRecipe::from_json(const nlohmann::json& j) {
  DegradationRecipe r;
  r.final_scale = j.value("final_scale", 0.25);
  r.seed = j.value("seed", std::uint64_t{0});
  r.jpeg_chroma_subsampling = j.value("jpeg_chroma_subsampling", true);
  for (const auto& s : j.at("stages")) r.stages.push_back(stage_from_json(s));
  return r;
}

namespace detail {

inline nlohmann::json range_json(Range r) { return nlohmann::json::array({r.lo, r.hi}); }

inline void read_range(const nlohmann::json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw std::invalid_argument(std::string("config: '") + key + "' must be [lo, hi]");
  r = Range{a[0].get<double>(), a[1].get<double>()};
}

inline nlohmann::json round_json(const RoundConfig& r) {
  return {{"blur_prob", r.blur_prob},         {"sinc_prob", r.sinc_prob},
          {"aniso_prob", r.aniso_prob},       {"blur_sigma", range_json(r.blur_sigma)},
          {"ksize", range_json(r.ksize)},     {"sinc_cutoff", range_json(r.sinc_cutoff)},
          {"resize_prob", r.resize_prob},     {"resize_scale", range_json(r.resize_scale)},
          {"noise_prob", r.noise_prob},       {"gaussian_prob", r.gaussian_prob},
          {"gray_prob", r.gray_prob},         {"noise_sigma", range_json(r.noise_sigma)},
          {"poisson_scale", range_json(r.poisson_scale)}, {"jpeg_prob", r.jpeg_prob},
          {"jpeg_quality", range_json(r.jpeg_quality)}};
}

inline void read_round(const nlohmann::json& j, RoundConfig& r) {
  r.blur_prob = j.value("blur_prob", r.blur_prob);
  r.sinc_prob = j.value("sinc_prob", r.sinc_prob);
  r.aniso_prob = j.value("aniso_prob", r.aniso_prob);
  read_range(j, "blur_sigma", r.blur_sigma);
  read_range(j, "ksize", r.ksize);
  read_range(j, "sinc_cutoff", r.sinc_cutoff);
  r.resize_prob = j.value("resize_prob", r.resize_prob);
  read_range(j, "resize_scale", r.resize_scale);
  r.noise_prob = j.value("noise_prob", r.noise_prob);
  r.gaussian_prob = j.value("gaussian_prob", r.gaussian_prob);
  r.gray_prob = j.value("gray_prob", r.gray_prob);
  read_range(j, "noise_sigma", r.noise_sigma);
  read_range(j, "poisson_scale", r.poisson_scale);
  r.jpeg_prob = j.value("jpeg_prob", r.jpeg_prob);
  read_range(j, "jpeg_quality", r.jpeg_quality);
}

}  // namespace detail

inline nlohmann::json DegradeConfig::to_json() const {
  return {{"round1", detail::round_json(round1)},
          {"round2", detail::round_json(round2)},
          {"final_jpeg_quality", detail::range_json(final_jpeg_quality)},
          {"final_sinc_prob", final_sinc_prob},
          {"final_sinc_cutoff", detail::range_json(final_sinc_cutoff)},
          {"final_scale", final_scale},
          {"rho_blur", detail::range_json(rho_blur)},
          {"rho_noise", detail::range_json(rho_noise)},
          {"jpeg_contrast_prob", jpeg_contrast_prob},
          {"jpeg_chroma_subsampling", jpeg_chroma_subsampling}};
}

/// Missing keys keep their defaults. A "round1" block without "round2"
/// derives round 2 from it by the 80% rule.
inline DegradeConfig DegradeConfig::from_json(const nlohmann::json& j) {
  DegradeConfig c;
  if (j.contains("round1")) {
    detail::read_round(j.at("round1"), c.round1);
    c.round2 = second_round_from(c.round1);
  }
  if (j.contains("round2")) detail::read_round(j.at("round2"), c.round2);
  detail::read_range(j, "final_jpeg_quality", c.final_jpeg_quality);
  c.final_sinc_prob = j.value("final_sinc_prob", c.final_sinc_prob);
  detail::read_range(j, "final_sinc_cutoff", c.final_sinc_cutoff);
  c.final_scale = j.value("final_scale", c.final_scale);
  detail::read_range(j, "rho_blur", c.rho_blur);
  detail::read_range(j, "rho_noise", c.rho_noise);
  c.jpeg_contrast_prob = j.value("jpeg_contrast_prob", c.jpeg_contrast_prob);
  c.jpeg_chroma_subsampling = j.value("jpeg_chroma_subsampling", c.jpeg_chroma_subsampling);
  c.validate();
  return c;
}

}  // namespace mmsr::degrade
