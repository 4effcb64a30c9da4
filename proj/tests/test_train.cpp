#include <gtest/gtest.h>

#include <filesystem>

#include "mmsr/trainer.hpp"
#include "testing.hpp"

using namespace mmsr;
using namespace mmsr::train;

namespace {

TrainConfig tiny_run(std::uint64_t seed = 1) {
  TrainConfig c;
  c.model.udem = {4, 1};
  c.model.generator = {4, 1, 4};
  c.model.condition = {4};
  c.batch = 2;
  c.patch = 32;
  c.seed = seed;
  c.stage1_iters = 60;
  c.stage2_iters = 40;
  return c;
}

std::vector<Tensor> udem_weights(TrainState& st) {
  std::vector<Tensor> out;
  for (auto& p : st.models().udem.params().all()) out.push_back(p.value);
  return out;
}

std::vector<Tensor> generator_weights(TrainState& st) {
  std::vector<Tensor> out;
  for (auto* s : {&st.models().condition.params(), &st.models().generator.params()})
    for (auto& p : s->all()) out.push_back(p.value);
  return out;
}

}  // namespace

TEST(Losses, MarginRankingExamples) {
  EXPECT_EQ(margin_ranking_loss(0.6, 0.4, 0.05), 0.0);
  EXPECT_EQ(margin_ranking_loss(0.4, 0.4, 0.05), 0.05);
  EXPECT_EQ(margin_ranking_loss(0.4, 0.6, 0.05), 0.05 - (0.4 - 0.6));
  EXPECT_NEAR(margin_ranking_loss(0.4, 0.6, 0.05), 0.25, 1e-15);
  // Separation of exactly gamma (exactly representable operands).
  EXPECT_EQ(margin_ranking_loss(0.75, 0.5, 0.25), 0.0);
  EXPECT_EQ(margin_ranking_loss(0.05, 0.0, 0.05), 0.0);
  EXPECT_GT(margin_ranking_loss(0.75, 0.5 + 1e-12, 0.25), 0.0);
  EXPECT_THROW(margin_ranking_loss(1, 0, 0), std::invalid_argument);
}

TEST(Losses, AnchorExamples) {
  EXPECT_EQ(anchor_loss(1, 1, 0, 0), 0.0);
  EXPECT_EQ(anchor_loss(0, 0, 1, 1), 4.0);
  EXPECT_EQ(anchor_loss(0.5, 1, 0, 0.5), 0.5);
}

TEST(Losses, TapeVersionsAgreeWithScalarVersions) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double a = uniform(rng, -1, 2), b = uniform(rng, -1, 2), c = uniform(rng, -1, 2), d = uniform(rng, -1, 2);
    ad::Tape<double> t;
    EXPECT_EQ(ad::margin_ranking_loss(t.scalar(a), t.scalar(b), 0.05).item(), margin_ranking_loss(a, b, 0.05));
    EXPECT_DOUBLE_EQ(ad::anchor_loss(t.scalar(a), t.scalar(b), t.scalar(c), t.scalar(d)).item(), anchor_loss(a, b, c, d));
  }
  ad::Tape<double> t;
  EXPECT_EQ(ad::margin_ranking_loss(t.scalar(0.75), t.scalar(0.5), 0.25).item(), 0.0);
}

TEST(Losses, AnchorGradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    std::vector<Tensor> in;
    for (int k = 0; k < 4; ++k) in.push_back(mmsr::testing::random_tensor(Shape{1}, rng, -1, 2));
    const auto r = mmsr::testing::check_gradients(in, [](auto&, const auto& x) { return ad::anchor_loss(x[0], x[1], x[2], x[3]); }, 40 + i);
    EXPECT_LE(r.max_rel, 1e-6);
  }
}

TEST(Adam, MatchesHandRecurrence) {
  Parameter p("w", Tensor(Shape{2}, Buffer<double>{0.5, -1.0}));
  AdamState st;
  AdamConfig cfg;
  std::vector<Parameter*> ps{&p};
  double w0 = 0.5, m = 0, v = 0;
  const double grads[] = {0.3, -0.1, 0.7};
  for (int t = 1; t <= 3; ++t) {
    p.grad[0] = grads[t - 1];
    p.grad[1] = 0;
    adam_step(ps, st, 1e-2, cfg);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.99 * v + 0.01 * grads[t - 1] * grads[t - 1];
    w0 -= 1e-2 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.99, t))) + 1e-8);
    EXPECT_NEAR(p.value[0], w0, 1e-15);
    EXPECT_EQ(p.value[1], -1.0);
  }
  EXPECT_EQ(st.step, 3u);
  Parameter q("q", Tensor(Shape{3}));
  std::vector<Parameter*> other{&q};
  EXPECT_THROW(adam_step(other, st, 1e-2), std::invalid_argument);
}

TEST(Trainer, ConfigRoundTripAndValidation) {
  const auto c = tiny_run();
  EXPECT_EQ(TrainConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_EQ(c.lr_at(0), 2e-4);
  EXPECT_EQ(c.lr_at(60), 1e-4);
  auto bad = c.to_json();
  bad["patch"] = 30;
  EXPECT_THROW(TrainConfig::from_json(bad), std::invalid_argument);
  bad = c.to_json();
  bad["weights"]["lambda_gan"] = 0.1;
  EXPECT_THROW(TrainConfig::from_json(bad), std::invalid_argument);
}

TEST(Trainer, ReportsAreDeterministicForFixedSeeds) {
  TrainState a(tiny_run(5)), b(tiny_run(5)), c(tiny_run(6));
  bool differs = false;
  for (int i = 0; i < 5; ++i) {
    const auto ra = train_iteration(a), rb = train_iteration(b), rc = train_iteration(c);
    EXPECT_EQ(ra, rb);
    EXPECT_TRUE(ra.finite());
    differs |= !(ra == rc);
  }
  EXPECT_TRUE(differs);
}

TEST(Trainer, TotalIsExactlyTheWeightedSum) {
  TrainState st(tiny_run(2));
  const auto batch = make_batch(st.config, 0);
  const auto r = train_step(st, batch);
  const auto& w = st.config.weights;
  EXPECT_NEAR(r.total, w.l1 * r.l1 + w.metric * (r.ml_n + r.ml_b + r.ac), 1e-12);
}

TEST(Trainer, ZeroMetricWeightFreezesUdem) {
  auto cfg = tiny_run(3);
  cfg.weights.metric = 0;
  TrainState st(cfg);
  const auto before = udem_weights(st);
  const auto gen_before = generator_weights(st);
  for (int i = 0; i < 3; ++i) train_iteration(st);
  EXPECT_EQ(udem_weights(st), before);
  EXPECT_NE(generator_weights(st), gen_before);
}

TEST(Trainer, RestorationLossGivesZeroUdemGradient) {
  TrainState st(tiny_run(4));
  auto& m = st.models();
  const auto g = make_batch(st.config, 0)[0];
  for (auto* p : m.all_params()) p->zero_grad();
  ad::Tape<Real> t;
  auto pu = m.udem.params().bind(t);
  auto s = m.udem.forward(pu, t.constant(g.c2));
  auto pc = m.condition.params().bind(t);
  auto pg = m.generator.params().bind(t);
  auto mods = m.condition.forward(pc, ad::concat<Real>({t.detach(s.s_n), t.detach(s.s_b)}));
  t.backward(ad::l1_loss(m.generator.forward(pg, t.constant(g.c2), mods), t.constant(g.hr)));
  for (auto& p : m.udem.params().all())
    for (double v : p.grad.values()) ASSERT_EQ(v, 0.0) << p.name;
  double gen_mass = 0;
  for (auto& p : m.generator.params().all())
    for (double v : p.grad.values()) gen_mass += std::abs(v);
  EXPECT_GT(gen_mass, 0.0);
}

TEST(Trainer, UdemUpdatesIgnoreTheRestorationTerm) {
  // Perturbing the L1 weight, or dropping the generator entirely, must leave
  // every UDEM update bit-identical.
  auto base = tiny_run(8);
  auto heavy = base;
  heavy.weights.l1 = 7.5;
  auto udem_only = base;
  udem_only.train_generator = false;
  TrainState a(base), b(heavy), c(udem_only);
  for (int i = 0; i < 4; ++i) {
    train_iteration(a);
    train_iteration(b);
    train_iteration(c);
  }
  EXPECT_EQ(udem_weights(a), udem_weights(b));
  EXPECT_EQ(udem_weights(a), udem_weights(c));
  EXPECT_NE(generator_weights(a), generator_weights(b));
  TrainState fresh(udem_only);
  EXPECT_EQ(generator_weights(c), generator_weights(fresh));
}

TEST(Trainer, ResumeIsBitExact) {
  const auto cfg = tiny_run(9);
  TrainState straight(cfg);
  std::vector<LossReport> ref;
  for (int i = 0; i < 100; ++i) ref.push_back(train_iteration(straight));

  TrainState first(cfg);
  std::vector<LossReport> got;
  for (int i = 0; i < 50; ++i) got.push_back(train_iteration(first));
  const auto path = ::testing::TempDir() + "resume_50.bin";
  save_checkpoint(first.ckpt, path);
  TrainState second(load_checkpoint(path));
  EXPECT_EQ(second.iteration(), 50u);
  for (int i = 0; i < 50; ++i) got.push_back(train_iteration(second));
  EXPECT_EQ(got, ref);
  EXPECT_EQ(serialize(second.ckpt), serialize(straight.ckpt));
}

TEST(Trainer, LossDecreasesOverTheFirst200Iterations) {
  auto cfg = tiny_run(10);
  cfg.stage1_iters = 200;
  cfg.stage2_iters = 0;
  TrainState st(cfg);
  std::vector<double> window(4, 0.0);
  for (int i = 0; i < 200; ++i) window[static_cast<std::size_t>(i / 50)] += train_iteration(st).total / 50;
  for (std::size_t k = 1; k < window.size(); ++k) EXPECT_LT(window[k], window[k - 1]) << k;
}

TEST(Trainer, RunTrainingWritesLogAndCheckpoints) {
  auto cfg = tiny_run(11);
  cfg.stage1_iters = 4;
  cfg.stage2_iters = 2;
  cfg.checkpoint_every = 3;
  TrainState st(cfg);
  const auto dir = ::testing::TempDir() + "mmsr_run";
  std::filesystem::remove_all(dir);
  int reports = 0;
  run_training(st, {dir, [&](const LossReport&) { ++reports; }, {}, false, 0});
  EXPECT_EQ(reports, 6);
  EXPECT_TRUE(std::filesystem::exists(dir + "/ckpt_3.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/ckpt_6.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir + "/final.bin"));
  std::ifstream log(dir + "/train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"iter", "l1", "ml_n", "ml_b", "ac", "lr"}) EXPECT_TRUE(j.contains(k));
    ++lines;
  }
  EXPECT_EQ(lines, 6);
  EXPECT_THROW(run_training(st, {"/proc/forbidden/dir", {}, {}, false, 0}), std::runtime_error);
}
