#pragma once

#include <json.hpp>

#include <algorithm>
#include <stdexcept>

#include "mmsr/autodiff.hpp"

namespace mmsr {

/// Weights of the total objective. GAN and perceptual terms are carried for
/// completeness but must stay zero here: no discriminator or feature network exists.
struct LossWeights {
  double gan = 0.0;
  double perceptual = 0.0;
  double l1 = 1.0;
  double metric = 0.05;
  double gamma = 0.05;      // ranking margin
  bool use_anchor = true;

  void validate() const {
    if (gan < 0 || perceptual < 0 || l1 < 0 || metric < 0) throw std::invalid_argument("loss weights must be non-negative");
    if (gan != 0 || perceptual != 0) throw std::invalid_argument("GAN and perceptual weights are unsupported and must be 0");
    if (!(gamma > 0)) throw std::invalid_argument("ranking margin gamma must be positive");
  }

  nlohmann::json to_json() const {
    return {{"lambda_gan", gan}, {"lambda_perceptual", perceptual}, {"lambda_l1", l1}, {"lambda_metric", metric}, {"gamma", gamma}, {"use_anchor", use_anchor}};
  }
  static LossWeights from_json(const nlohmann::json& j) {
    LossWeights w;
    w.gan = j.value("lambda_gan", w.gan);
    w.perceptual = j.value("lambda_perceptual", w.perceptual);
    w.l1 = j.value("lambda_l1", w.l1);
    w.metric = j.value("lambda_metric", w.metric);
    w.gamma = j.value("gamma", w.gamma);
    w.use_anchor = j.value("use_anchor", w.use_anchor);
    w.validate();
    return w;
  }
};

/// max(0, gamma - (s_hi - s_lo)) for scalars.
inline double margin_ranking_loss(double s_hi, double s_lo, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("margin_ranking_loss: gamma must be positive");
  return std::max(0.0, gamma - (s_hi - s_lo));
}

/// (s_max_n - 1)^2 + (s_max_b - 1)^2 + s_min_n^2 + s_min_b^2
inline double anchor_loss(double s_max_n, double s_max_b, double s_min_n, double s_min_b) {
  return (s_max_n - 1) * (s_max_n - 1) + (s_max_b - 1) * (s_max_b - 1) + s_min_n * s_min_n + s_min_b * s_min_b;
}

namespace ad {

/// Differentiable hinge on scalar tape values.
template <class T>
Var<T> margin_ranking_loss(Var<T> s_hi, Var<T> s_lo, T gamma) {
  if (!(gamma > T(0))) throw std::invalid_argument("margin_ranking_loss: gamma must be positive");
  return relu(affine_scalar(sub(s_lo, s_hi), T(1), gamma));
}

/// Upper anchor (scores of the maximal sample pulled to 1).
template <class T>
Var<T> anchor_upper(Var<T> s_max_n, Var<T> s_max_b) {
  return add(square(affine_scalar(s_max_n, T(1), T(-1))), square(affine_scalar(s_max_b, T(1), T(-1))));
}

/// Lower anchor (scores of the clean sample pulled to 0).
template <class T>
Var<T> anchor_lower(Var<T> s_min_n, Var<T> s_min_b) {
  return add(square(s_min_n), square(s_min_b));
}

template <class T>
Var<T> anchor_loss(Var<T> s_max_n, Var<T> s_max_b, Var<T> s_min_n, Var<T> s_min_b) {
  return add(anchor_upper(s_max_n, s_max_b), anchor_lower(s_min_n, s_min_b));
}

}  // namespace ad

}  // namespace mmsr
