#pragma once

// Randomized gradient-check configurations, one factory per differentiable op.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmsr/autodiff.hpp"
#include "mmsr/losses.hpp"
#include "testing.hpp"

namespace mmsr::testing {

struct OpCase {
  std::string name;
  std::function<std::pair<std::vector<Tensor>, Builder>(Rng&)> make;
};

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

inline std::vector<OpCase> op_cases() {
  std::vector<OpCase> cs;
  auto shape3 = [](Rng& r) { return Shape{pick(r, 1, 3), pick(r, 2, 5), pick(r, 2, 5)}; };
  cs.push_back({"add", [=](Rng& r) {
                  auto s = shape3(r);
                  return std::pair{std::vector{random_tensor(s, r), random_tensor(s, r)}, Builder([](TapeD&, auto& v) { return ad::add(v[0], v[1]); })};
                }});
  cs.push_back({"sub", [=](Rng& r) {
                  auto s = shape3(r);
                  return std::pair{std::vector{random_tensor(s, r), random_tensor(s, r)}, Builder([](TapeD&, auto& v) { return ad::sub(v[0], v[1]); })};
                }});
  cs.push_back({"affine_scalar", [=](Rng& r) {
                  const double a = uniform(r, -2, 2), c = uniform(r, -1, 1);
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([=](TapeD&, auto& v) { return ad::affine_scalar(v[0], a, c); })};
                }});
  cs.push_back({"scale", [=](Rng& r) {
                  const double a = uniform(r, -2, 2);
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([=](TapeD&, auto& v) { return ad::scale(v[0], a); })};
                }});
  cs.push_back({"square", [=](Rng& r) {
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([](TapeD&, auto& v) { return ad::square(v[0]); })};
                }});
  cs.push_back({"relu", [=](Rng& r) {
                  return std::pair{std::vector{away_from_zero(shape3(r), r)}, Builder([](TapeD&, auto& v) { return ad::relu(v[0]); })};
                }});
  cs.push_back({"leaky_relu", [=](Rng& r) {
                  const double s = uniform(r, 0.01, 0.5);
                  return std::pair{std::vector{away_from_zero(shape3(r), r)}, Builder([=](TapeD&, auto& v) { return ad::leaky_relu(v[0], s); })};
                }});
  cs.push_back({"sum", [=](Rng& r) {
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([](TapeD&, auto& v) { return ad::sum(v[0]); })};
                }});
  cs.push_back({"mean", [=](Rng& r) {
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([](TapeD&, auto& v) { return ad::mean(v[0]); })};
                }});
  cs.push_back({"l1_loss", [=](Rng& r) {
                  auto s = shape3(r);
                  Tensor a = random_tensor(s, r), d = away_from_zero(s, r);
                  Tensor b = a;
                  for (std::size_t i = 0; i < b.size(); ++i) b[i] = a[i] + d[i];
                  return std::pair{std::vector{a, b}, Builder([](TapeD&, auto& v) { return ad::l1_loss(v[0], v[1]); })};
                }});
  cs.push_back({"slice", [=](Rng& r) {
                  const std::size_t n = pick(r, 3, 12), off = pick(r, 0, n - 1), cnt = pick(r, 1, n - off);
                  return std::pair{std::vector{random_tensor(Shape{n}, r)}, Builder([=](TapeD&, auto& v) { return ad::slice(v[0], off, cnt); })};
                }});
  cs.push_back({"concat", [=](Rng& r) {
                  std::vector<Tensor> xs;
                  for (std::size_t i = 0, k = pick(r, 2, 4); i < k; ++i) xs.push_back(random_tensor(Shape{pick(r, 1, 5)}, r));
                  return std::pair{xs, Builder([](TapeD&, auto& v) { return ad::concat(std::vector<VarD>(v.begin(), v.end())); })};
                }});
  cs.push_back({"conv2d", [=](Rng& r) {
                  const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), k = 2 * pick(r, 0, 2) + 1, stride = pick(r, 1, 2);
                  const std::size_t pad = pick(r, 0, k / 2);
                  std::size_t h = k + stride * pick(r, 0, 3), w = k + stride * pick(r, 0, 3);
                  h -= 2 * pad;
                  w -= 2 * pad;
                  if (h == 0) h += stride;
                  if (w == 0) w += stride;
                  return std::pair{std::vector{random_tensor(Shape{cin, h, w}, r), random_tensor(Shape{cout, cin, k, k}, r), random_tensor(Shape{cout}, r)},
                                   Builder([=](TapeD&, auto& v) { return ad::conv2d(v[0], v[1], v[2], stride, pad); })};
                }});
  cs.push_back({"conv2d_reflect", [=](Rng& r) {
                  const std::size_t cin = pick(r, 1, 3), cout = pick(r, 1, 3), k = 2 * pick(r, 1, 2) + 1, pad = k / 2;
                  const std::size_t h = pick(r, 1, 6), w = pick(r, 1, 6);
                  return std::pair{std::vector{random_tensor(Shape{cin, h, w}, r), random_tensor(Shape{cout, cin, k, k}, r), random_tensor(Shape{cout}, r)},
                                   Builder([=](TapeD&, auto& v) { return ad::conv2d(v[0], v[1], v[2], 1, pad, ad::Pad::reflect); })};
                }});
  cs.push_back({"dense", [=](Rng& r) {
                  const std::size_t n = pick(r, 1, 6), m = pick(r, 1, 6);
                  return std::pair{std::vector{random_tensor(Shape{n}, r), random_tensor(Shape{m, n}, r), random_tensor(Shape{m}, r)},
                                   Builder([](TapeD&, auto& v) { return ad::dense(v[0], v[1], v[2]); })};
                }});
  cs.push_back({"global_avg_pool", [=](Rng& r) {
                  return std::pair{std::vector{random_tensor(shape3(r), r)}, Builder([](TapeD&, auto& v) { return ad::global_avg_pool(v[0]); })};
                }});
  cs.push_back({"pixel_shuffle", [=](Rng& r) {
                  const std::size_t f = pick(r, 2, 3);
                  return std::pair{std::vector{random_tensor(Shape{pick(r, 1, 2) * f * f, pick(r, 1, 3), pick(r, 1, 3)}, r)},
                                   Builder([=](TapeD&, auto& v) { return ad::pixel_shuffle(v[0], f); })};
                }});
  cs.push_back({"pixel_unshuffle", [=](Rng& r) {
                  const std::size_t f = pick(r, 2, 3);
                  return std::pair{std::vector{random_tensor(Shape{pick(r, 1, 2), f * pick(r, 1, 3), f * pick(r, 1, 3)}, r)},
                                   Builder([=](TapeD&, auto& v) { return ad::pixel_unshuffle(v[0], f); })};
                }});
  cs.push_back({"broadcast_affine", [=](Rng& r) {
                  auto s = shape3(r);
                  return std::pair{std::vector{random_tensor(s, r), random_tensor(Shape{s[0]}, r), random_tensor(Shape{s[0]}, r)},
                                   Builder([](TapeD&, auto& v) { return ad::broadcast_affine(v[0], v[1], v[2]); })};
                }});
  cs.push_back({"margin_ranking_loss", [=](Rng& r) {
                  // Keep the hinge argument away from its kink.
                  const double gamma = 0.05, d = (r() & 1 ? 1 : -1) * uniform(r, 0.02, 0.5);
                  const double lo = uniform(r, -1, 1);
                  return std::pair{std::vector{Tensor(Shape{1}, {lo + gamma + d}), Tensor(Shape{1}, {lo})},
                                   Builder([=](TapeD&, auto& v) { return ad::margin_ranking_loss(v[0], v[1], gamma); })};
                }});
  cs.push_back({"anchor_loss", [=](Rng& r) {
                  std::vector<Tensor> xs;
                  for (int i = 0; i < 4; ++i) xs.push_back(random_tensor(Shape{1}, r, -0.5, 1.5));
                  return std::pair{xs, Builder([](TapeD&, auto& v) { return ad::anchor_loss(v[0], v[1], v[2], v[3]); })};
                }});
  cs.push_back({"composite", [=](Rng& r) {
                  // conv -> affine -> shuffle -> pool -> dense: a miniature network slice.
                  return std::pair{std::vector{random_tensor(Shape{2, 4, 4}, r), random_tensor(Shape{8, 2, 3, 3}, r), random_tensor(Shape{8}, r),
                                               random_tensor(Shape{8}, r), random_tensor(Shape{8}, r), random_tensor(Shape{3, 2}, r), random_tensor(Shape{3}, r)},
                                   Builder([](TapeD&, auto& v) {
                                     auto y = ad::broadcast_affine(ad::conv2d(v[0], v[1], v[2], 1, 1), v[3], v[4]);
                                     auto s = ad::square(ad::pixel_shuffle(y, 2));
                                     return ad::dense(ad::global_avg_pool(s), v[5], v[6]);
                                   })};
                }});
  return cs;
}

}  // namespace mmsr::testing
