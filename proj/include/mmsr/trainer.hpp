#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mmsr/adam.hpp"
#include "mmsr/checkpoint.hpp"
#include "mmsr/degrade/train_group.hpp"
#include "mmsr/losses.hpp"
#include "mmsr/nets.hpp"
#include "mmsr/synth.hpp"

namespace mmsr::train {

using degrade::TrainGroup;
using ad::Tape;
using nets::V;

struct TrainConfig {
  // Full-scale reference: batch 48, input patch 64, 1000K + 400K iterations.
  std::uint64_t stage1_iters = 3000;
  std::uint64_t stage2_iters = 1000;
  double lr_stage1 = 2e-4;
  double lr_stage2 = 1e-4;
  std::size_t batch = 8;
  std::size_t patch = 64;  // HR side; LR side is patch * final_scale
  std::uint64_t seed = 0;
  std::size_t data_workers = 1;
  std::uint64_t eval_every = 0;  // 0 disables periodic sweeps
  std::size_t eval_images = 8;
  std::uint64_t checkpoint_every = 1000;
  bool train_generator = true;
  LossWeights weights{};
  AdamConfig adam{};
  degrade::DegradeConfig degrade{};
  nets::ModelConfig model{};

  std::uint64_t total_iters() const { return stage1_iters + stage2_iters; }
  double lr_at(std::uint64_t iter) const { return iter < stage1_iters ? lr_stage1 : lr_stage2; }

  void validate() const {
    if (batch == 0 || patch == 0) throw std::invalid_argument("train config: batch and patch must be positive");
    if (patch % 4 != 0) throw std::invalid_argument("train config: patch must be divisible by 4");
    if (!(lr_stage1 > 0) || !(lr_stage2 > 0)) throw std::invalid_argument("train config: learning rates must be positive");
    if (data_workers == 0) throw std::invalid_argument("train config: data_workers must be >= 1");
    weights.validate();
    degrade.validate();
  }

  nlohmann::json to_json() const {
    return {{"stage1_iters", stage1_iters},
            {"stage2_iters", stage2_iters},
            {"lr_stage1", lr_stage1},
            {"lr_stage2", lr_stage2},
            {"batch", batch},
            {"patch", patch},
            {"seed", seed},
            {"data_workers", data_workers},
            {"eval_every", eval_every},
            {"eval_images", eval_images},
            {"checkpoint_every", checkpoint_every},
            {"train_generator", train_generator},
            {"weights", weights.to_json()},
            {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"eps", adam.eps}}},
            {"degrade", degrade.to_json()},
            {"model", model.to_json()}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.stage1_iters = j.value("stage1_iters", c.stage1_iters);
    c.stage2_iters = j.value("stage2_iters", c.stage2_iters);
    c.lr_stage1 = j.value("lr_stage1", c.lr_stage1);
    c.lr_stage2 = j.value("lr_stage2", c.lr_stage2);
    c.batch = j.value("batch", c.batch);
    c.patch = j.value("patch", c.patch);
    c.seed = j.value("seed", c.seed);
    c.data_workers = j.value("data_workers", c.data_workers);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_images = j.value("eval_images", c.eval_images);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.train_generator = j.value("train_generator", c.train_generator);
    if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
    if (j.contains("adam")) {
      c.adam.beta1 = j["adam"].value("beta1", c.adam.beta1);
      c.adam.beta2 = j["adam"].value("beta2", c.adam.beta2);
      c.adam.eps = j["adam"].value("eps", c.adam.eps);
    }
    if (j.contains("degrade")) c.degrade = degrade::DegradeConfig::from_json(j["degrade"]);
    if (j.contains("model")) c.model = nets::ModelConfig::from_json(j["model"]);
    c.validate();
    return c;
  }
};

/// Batch-mean loss terms of one optimization step.
struct LossReport {
  std::uint64_t iter = 0;
  double l1 = 0;
  double ml_n = 0;
  double ml_b = 0;
  double ac = 0;  // upper + lower anchor
  double total = 0;
  double lr = 0;

  bool finite() const { return std::isfinite(l1) && std::isfinite(ml_n) && std::isfinite(ml_b) && std::isfinite(ac) && std::isfinite(total); }
  nlohmann::json to_json() const { return {{"iter", iter}, {"l1", l1}, {"ml_n", ml_n}, {"ml_b", ml_b}, {"ac", ac}, {"total", total}, {"lr", lr}}; }
  friend bool operator==(const LossReport&, const LossReport&) = default;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const LossReport& r) : std::runtime_error("non-finite loss: " + r.to_json().dump()), report(r) {}
  LossReport report;
};

/// Per-group loss graph recorded on `t`.
struct GroupLosses {
  V l1, ml_n, ml_b, ac, total;
  bool has_l1 = false;
};

/// Records the losses of one group: scores for all five members, the two
/// ranking hinges, the anchor terms, and the L1 of c2 restored under its own
/// (gradient-severed) scores.
inline GroupLosses group_losses(nets::Models& m, Tape<Real>& t, const TrainGroup& g, const LossWeights& w, bool train_generator,
                                bool udem_trainable) {
  const auto pu = udem_trainable ? m.udem.params().bind(t) : std::as_const(m.udem.params()).bind(t);
  const auto s1 = m.udem.forward(pu, t.constant(g.c1));
  const auto s2 = m.udem.forward(pu, t.constant(g.c2));
  const auto s3 = m.udem.forward(pu, t.constant(g.c3));
  const auto sa1 = m.udem.forward(pu, t.constant(g.a1));
  const auto sa2 = m.udem.forward(pu, t.constant(g.a2));

  GroupLosses out;
  out.ml_b = ad::margin_ranking_loss(s1.s_b, s2.s_b, static_cast<Real>(w.gamma));
  out.ml_n = ad::margin_ranking_loss(s3.s_n, s2.s_n, static_cast<Real>(w.gamma));
  out.ac = ad::anchor_loss(sa1.s_n, sa1.s_b, sa2.s_n, sa2.s_b);
  V metric = ad::add(out.ml_n, out.ml_b);
  if (w.use_anchor) metric = ad::add(metric, out.ac);
  out.total = ad::scale(metric, static_cast<Real>(w.metric));

  if (train_generator) {
    const auto pc = m.condition.params().bind(t);
    const auto pg = m.generator.params().bind(t);
    V scores = ad::concat<Real>({t.detach(s2.s_n), t.detach(s2.s_b)});
    auto mods = m.condition.forward(pc, scores);
    V sr = m.generator.forward(pg, t.constant(g.c2), mods);
    out.l1 = ad::l1_loss(sr, t.constant(g.hr));
    out.has_l1 = true;
    out.total = ad::add(out.total, ad::scale(out.l1, static_cast<Real>(w.l1)));
  }
  return out;
}

/// Synthesizes the training groups for one iteration. Each group depends only
/// on (seed, iter, index), so any worker count yields the same batch.
inline std::vector<TrainGroup> make_batch(const TrainConfig& cfg, std::uint64_t iter, std::size_t workers = 1) {
  std::vector<TrainGroup> groups(cfg.batch);
  auto build = [&](std::size_t b) {
    const Image hr = synth::natural_image(derive_seed(cfg.seed, {iter, b, 0}), cfg.patch, cfg.patch);
    Rng rng(derive_seed(cfg.seed, {iter, b, 1}));
    groups[b] = degrade::make_train_group(hr, cfg.degrade, rng);
  };
  workers = std::max<std::size_t>(1, std::min(workers, cfg.batch));
  if (workers == 1) {
    for (std::size_t b = 0; b < cfg.batch; ++b) build(b);
    return groups;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t b = w; b < cfg.batch; b += workers) build(b);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return groups;
}

/// Mutable training state: models, optimizer and iteration counter.
struct TrainState {
  TrainConfig config;
  Checkpoint ckpt;

  explicit TrainState(TrainConfig cfg) : config(std::move(cfg)), ckpt(config.model) {
    config.validate();
    ckpt.config = config.to_json();
    ckpt.models.init(derive_seed(config.seed, {0xC0FFEE}));
  }

  /// Resume from a checkpoint; the checkpoint's stored config wins.
  explicit TrainState(Checkpoint ck) : config(TrainConfig::from_json(ck.config)), ckpt(std::move(ck)) {}

  nets::Models& models() { return ckpt.models; }
  std::uint64_t iteration() const { return ckpt.iteration; }

  /// Parameters updated by the optimizer. UDEM is frozen when the metric weight is zero.
  std::vector<Parameter*> trainable() {
    std::vector<Parameter*> out;
    auto& m = ckpt.models;
    const bool udem_on = config.weights.metric > 0;
    for (auto& p : m.udem.params().all()) out.push_back(udem_on ? &p : nullptr);
    for (auto* s : {&m.condition.params(), &m.generator.params()})
      for (auto& p : s->all()) out.push_back(config.train_generator ? &p : nullptr);
    return out;
  }
};

/// One optimization step over a batch of groups: batch-mean losses, one
/// backward pass per group, one Adam update.
inline LossReport train_step(TrainState& st, const std::vector<TrainGroup>& groups) {
  if (groups.empty()) throw std::invalid_argument("train_step: empty batch");
  auto& m = st.models();
  const auto& w = st.config.weights;
  const bool udem_trainable = w.metric > 0;
  for (auto* p : m.all_params()) p->zero_grad();

  LossReport rep;
  rep.iter = st.iteration();
  rep.lr = st.config.lr_at(st.iteration());
  const Real inv_n = Real(1) / static_cast<Real>(groups.size());
  for (const auto& g : groups) {
    Tape<Real> t;
    auto gl = group_losses(m, t, g, w, st.config.train_generator, udem_trainable);
    rep.ml_n += gl.ml_n.item() * inv_n;
    rep.ml_b += gl.ml_b.item() * inv_n;
    rep.ac += gl.ac.item() * inv_n;
    if (gl.has_l1) rep.l1 += gl.l1.item() * inv_n;
    rep.total += gl.total.item() * inv_n;
    if (!std::isfinite(gl.total.item())) throw TrainingDiverged(rep);
    if (gl.total.requires_grad()) t.backward(ad::scale(gl.total, inv_n));
  }
  if (!rep.finite()) throw TrainingDiverged(rep);

  // Adam over the full parameter list so optimizer state indices stay stable;
  // frozen entries get their gradient zeroed and are restored afterwards.
  auto all = m.all_params();
  const auto mask = st.trainable();
  std::vector<Tensor> frozen;
  std::vector<Tensor> frozen_m, frozen_v;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (!mask[i]) frozen.push_back(all[i]->value);
  const bool had_state = st.ckpt.adam.initialized_for(all);
  if (had_state)
    for (std::size_t i = 0; i < all.size(); ++i)
      if (!mask[i]) {
        frozen_m.push_back(st.ckpt.adam.m[i]);
        frozen_v.push_back(st.ckpt.adam.v[i]);
      }
  adam_step(all, st.ckpt.adam, static_cast<Real>(rep.lr), st.config.adam);
  for (std::size_t i = 0, k = 0; i < all.size(); ++i)
    if (!mask[i]) {
      all[i]->value = frozen[k];
      if (had_state) {
        st.ckpt.adam.m[i] = frozen_m[k];
        st.ckpt.adam.v[i] = frozen_v[k];
      } else {
        st.ckpt.adam.m[i].fill(0);
        st.ckpt.adam.v[i].fill(0);
      }
      ++k;
    }
  ++st.ckpt.iteration;
  return rep;
}

/// Generates the next batch from the state's own (seed, iteration) and steps.
inline LossReport train_iteration(TrainState& st) {
  return train_step(st, make_batch(st.config, st.iteration(), st.config.data_workers));
}

struct RunOptions {
  std::string out_dir;  // empty: no files written
  std::function<void(const LossReport&)> on_report;
  std::function<void(const TrainState&)> on_eval;  // called at eval cadence
  bool echo = false;  // print log records to stdout
  std::uint64_t max_iters = 0;  // 0: run to config.total_iters()
};

/// Two-stage schedule from the current iteration to the end. Writes
/// `train_log.jsonl`, periodic `ckpt_<iter>.bin` and `final.bin` under out_dir.
inline void run_training(TrainState& st, const RunOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::ofstream log;
  if (!opt.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + opt.out_dir + "': " + ec.message());
    const auto log_path = (fs::path(opt.out_dir) / "train_log.jsonl").string();
    log.open(log_path, std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log '" + log_path + "'");
  }
  const std::uint64_t end = opt.max_iters ? std::min(opt.max_iters, st.config.total_iters()) : st.config.total_iters();
  while (st.iteration() < end) {
    const auto rep = train_iteration(st);
    if (opt.on_report) opt.on_report(rep);
    const auto line = rep.to_json().dump();
    if (log) log << line << '\n' << std::flush;
    if (opt.echo) std::cout << line << '\n' << std::flush;
    const auto it = st.iteration();
    if (st.config.eval_every && it % st.config.eval_every == 0 && opt.on_eval) opt.on_eval(st);
    if (!opt.out_dir.empty() && st.config.checkpoint_every && it % st.config.checkpoint_every == 0)
      save_checkpoint(st.ckpt, (fs::path(opt.out_dir) / ("ckpt_" + std::to_string(it) + ".bin")).string());
  }
  if (!opt.out_dir.empty()) save_checkpoint(st.ckpt, (fs::path(opt.out_dir) / "final.bin").string());
}

}  // namespace mmsr::train
