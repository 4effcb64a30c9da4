#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mmsr/degrade/recipe.hpp"

namespace mmsr::degrade {

/// Which Gnoise stages a contrast scales.
enum class GnoiseTarget { all, additive, jpeg };

/// One contrast group {c1, c2, c3} and one anchor group {a1, a2} from a shared HR source.
struct TrainGroup {
  Image hr;
  Image c1, c2, c3;  // c1: more Gblur than c2; c3: more Gnoise than c2
  Image a1, a2;      // a1: maximal degradation; a2: clean downsample
  DegradationRecipe r1, r2, r3, ra1, ra2;
  double rho_blur = 1, rho_noise = 1;
  GnoiseTarget gnoise_target = GnoiseTarget::all;
};

namespace detail {

inline void insert_by_slot(DegradationRecipe& r, DegradationStage st) {
  auto it = std::find_if(r.stages.begin(), r.stages.end(), [&](const DegradationStage& s) { return s.slot > st.slot; });
  r.stages.insert(it, std::move(st));
}

inline int smallest_odd(Range r) {
  int k = static_cast<int>(std::ceil(r.lo));
  if (k % 2 == 0) ++k;
  return std::max(k, 3);
}

}  // namespace detail

/// Multiplies every Gblur stage intensity by rho (Gaussian sigmas up, sinc
/// cutoff down). With rho > 1 and no Gblur stage present, an isotropic blur
/// is inserted in round one. Resize stages are left untouched.
inline DegradationRecipe scale_gblur(DegradationRecipe r, double rho, const DegradeConfig& cfg) {
  if (!(rho >= 1)) throw std::invalid_argument("scale_gblur: rho must be >= 1");
  if (rho == 1) return r;
  bool any = false;
  for (auto& st : r.stages) {
    if (auto* b = std::get_if<BlurIso>(&st.op)) {
      b->sigma *= rho;
      any = true;
    } else if (auto* a = std::get_if<BlurAniso>(&st.op)) {
      a->sigma_x *= rho;
      a->sigma_y *= rho;
      any = true;
    } else if (auto* s = std::get_if<Sinc>(&st.op)) {
      s->cutoff /= rho;
      any = true;
    }
  }
  if (!any)
    detail::insert_by_slot(r, {kRound1Blur, BlurIso{cfg.round1.blur_sigma.lo * rho, detail::smallest_odd(cfg.round1.ksize)}});
  return r;
}

/// Multiplies Gnoise stage intensities by rho: Gaussian sigma and the Poisson
/// equivalent sigma scale by rho, JPEG distance-from-100 scales by rho (floored
/// at the configured minimum quality). `target` restricts scaling to the
/// additive noise stages or to the JPEG stages. When additive noise should
/// grow but no noise stage is present, Gaussian noise is inserted in round
/// two; a JPEG-only contrast that cannot lower any quality falls back to that.
inline DegradationRecipe scale_gnoise(DegradationRecipe r, double rho, const DegradeConfig& cfg, GnoiseTarget target = GnoiseTarget::all) {
  if (!(rho >= 1)) throw std::invalid_argument("scale_gnoise: rho must be >= 1");
  if (rho == 1) return r;
  const DegradationRecipe original = r;
  const int q_floor = static_cast<int>(std::ceil(std::min({cfg.round1.jpeg_quality.lo, cfg.round2.jpeg_quality.lo, cfg.final_jpeg_quality.lo})));
  const bool additive = target != GnoiseTarget::jpeg, jpeg = target != GnoiseTarget::additive;
  bool any_noise = false, jpeg_moved = false;
  for (auto& st : r.stages) {
    if (auto* g = std::get_if<GaussianNoise>(&st.op); g && additive) {
      g->sigma *= rho;
      any_noise = true;
    } else if (auto* p = std::get_if<PoissonNoise>(&st.op); p && additive) {
      p->scale /= rho * rho;
      any_noise = true;
    } else if (auto* j = std::get_if<Jpeg>(&st.op); j && jpeg) {
      const int q = static_cast<int>(std::lround(100.0 - (100.0 - j->quality) * rho));
      const int nq = std::clamp(q, std::min(q_floor, j->quality), 100);
      jpeg_moved |= nq != j->quality;
      j->quality = nq;
    }
  }
  if (target == GnoiseTarget::jpeg) return jpeg_moved ? r : scale_gnoise(original, rho, cfg, GnoiseTarget::additive);
  if (!any_noise) detail::insert_by_slot(r, {kRound2Noise, GaussianNoise{cfg.round2.noise_sigma.lo * rho / 255.0, false}});
  return r;
}

/// Builds the five group members. c1/c2/c3 share one recipe seed so that any
/// stage they have in common draws the same noise realization.
inline TrainGroup make_train_group(const Image& hr, const DegradeConfig& cfg, Rng& rng) {
  require_image(hr, "make_train_group");
  cfg.validate();
  const auto down = static_cast<std::size_t>(std::lround(1.0 / cfg.final_scale));
  if (down == 0 || height(hr) % down != 0 || width(hr) % down != 0)
    throw std::invalid_argument("make_train_group: HR extents must be divisible by " + std::to_string(down));
  const int kmax = std::max(largest_odd(cfg.round1.ksize), largest_odd(cfg.round2.ksize));
  if (height(hr) < static_cast<std::size_t>(kmax) || width(hr) < static_cast<std::size_t>(kmax))
    throw std::invalid_argument("make_train_group: HR patch smaller than the largest blur kernel (" + std::to_string(kmax) + ")");

  TrainGroup g;
  g.hr = hr;
  g.r2 = sample_recipe(cfg, rng);
  g.rho_blur = cfg.rho_blur.draw(rng);
  g.rho_noise = cfg.rho_noise.draw(rng);
  g.r1 = scale_gblur(g.r2, g.rho_blur, cfg);
  g.gnoise_target = bernoulli(rng, cfg.jpeg_contrast_prob) ? GnoiseTarget::jpeg : GnoiseTarget::additive;
  g.r3 = scale_gnoise(g.r2, g.rho_noise, cfg, g.gnoise_target);
  g.ra1 = maximal_recipe(cfg, rng());
  g.ra2 = clean_recipe(cfg.final_scale);
  g.c1 = apply_recipe(hr, g.r1);
  g.c2 = apply_recipe(hr, g.r2);
  g.c3 = apply_recipe(hr, g.r3);
  g.a1 = apply_recipe(hr, g.ra1);
  g.a2 = apply_recipe(hr, g.ra2);
  return g;
}

}  // namespace mmsr::degrade
