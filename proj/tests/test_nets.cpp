#include <gtest/gtest.h>

#include "mmsr/checkpoint.hpp"
#include "mmsr/nets.hpp"
#include "mmsr/synth.hpp"

using namespace mmsr;
using namespace mmsr::nets;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.udem = {4, 1};
  c.generator = {4, 2, 4};
  c.condition = {4};
  return c;
}

Image random_lr(std::uint64_t seed, std::size_t h, std::size_t w) { return degrade::resize(synth::natural_image(seed, 4 * h, 4 * w), degrade::ResizeMode::bicubic, 0.25); }

// Perturbs every condition-net parameter so the modulation is far from identity.
void scramble_condition(Models& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : m.condition.params().all())
    for (auto& v : p.value.values()) v += uniform(rng, -0.3, 0.3);
}

}  // namespace

TEST(Nets, ParameterCountsMatchTheArchitecture) {
  Models m;
  // stem 448; per branch 4 x 2 x (16*16*9 + 16) + 17
  EXPECT_EQ(m.udem.params().count(), 37602u);
  // head 896; blocks 4 x 2 x 9248; up 18496 + 9280; tails 2320 + 435
  EXPECT_EQ(m.generator.params().count(), 105411u);
  // per site (2*32 + 32) + (32*64 + 64)
  EXPECT_EQ(m.condition.params().count(), 8832u);
  EXPECT_EQ(m.parameter_count(), 151845u);
  EXPECT_EQ(Udem::expected_count(m.config.udem), m.udem.params().count());
  EXPECT_EQ(Generator::expected_count(m.config.generator), m.generator.params().count());
  EXPECT_EQ(ConditionNet::expected_count(m.config.condition, 4, 32), m.condition.params().count());
  const auto t = tiny_config();
  Models s(t);
  EXPECT_EQ(Udem::expected_count(t.udem), s.udem.params().count());
  EXPECT_EQ(Generator::expected_count(t.generator), s.generator.params().count());
  EXPECT_EQ(m.condition.sites(), m.generator.blocks());
}

TEST(Nets, BranchesShareOnlyTheStem) {
  Models m;
  auto n = m.udem.branch_params(0), b = m.udem.branch_params(1);
  for (auto i : n) EXPECT_EQ(std::count(b.begin(), b.end(), i), 0);
  for (auto i : n) EXPECT_NE(m.udem.params()[i].name.find("udem.noise"), std::string::npos);
  for (auto i : b) EXPECT_NE(m.udem.params()[i].name.find("udem.blur"), std::string::npos);
  EXPECT_EQ(n.size() + b.size() + 2, m.udem.params().size());
}

TEST(Nets, SeededInitIsDeterministic) {
  Models a, b, c;
  a.init(5);
  b.init(5);
  c.init(6);
  auto pa = a.all_params(), pb = b.all_params(), pc = c.all_params();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    any_diff |= pa[i]->value != pc[i]->value;
  }
  EXPECT_TRUE(any_diff);
  const auto lr = random_lr(1, 12, 12);
  EXPECT_EQ(a.udem.score(lr), a.udem.score(lr));
  EXPECT_EQ(a.restore(lr, {0.3, 0.7}), b.restore(lr, {0.3, 0.7}));
}

TEST(Nets, ConditionShapesAndNearIdentityStart) {
  Models m;
  m.init(2);
  ad::Tape<Real> t;
  auto p = m.condition.params().bind(t);
  auto mods = m.condition.forward(p, t.constant(Shape{2}, {0.9, 0.1}));
  ASSERT_EQ(mods.size(), m.generator.blocks());
  for (const auto& md : mods) {
    ASSERT_EQ(md.alpha.shape(), Shape{32});
    ASSERT_EQ(md.beta.shape(), Shape{32});
    for (double v : md.alpha.value()) EXPECT_EQ(v, 1.0);
    for (double v : md.beta.value()) EXPECT_EQ(v, 0.0);
  }
  const auto lr = random_lr(3, 10, 12);
  const auto plain = clip01(m.restore_unconditioned(lr));
  for (auto s : {ScorePair{0, 0}, ScorePair{1, 1}, ScorePair{0.2, 0.9}}) EXPECT_LE(max_abs_diff(m.restore(lr, s), plain), 1e-3);
  EXPECT_THROW(m.condition.forward(p, t.constant(Shape{3}, {0, 0, 0})), ShapeError);
  EXPECT_THROW(m.condition.forward(p, t.constant(Shape{2}, {std::nan(""), 0})), std::invalid_argument);
}

TEST(Nets, IdentityModulationEqualsUnconditionedBitExactly) {
  Models m;
  m.init(4);
  const auto lr = random_lr(8, 9, 11);
  ad::Tape<Real> t;
  auto pg = m.generator.params().bind(t);
  std::vector<Modulation> ident;
  for (std::size_t i = 0; i < m.generator.blocks(); ++i)
    ident.push_back({t.constant(Tensor(Shape{32}, 1.0)), t.constant(Tensor(Shape{32}, 0.0))});
  const auto with = m.generator.forward(pg, t.constant(lr), ident).tensor();
  EXPECT_EQ(with, m.restore_unconditioned(lr));
  EXPECT_EQ(height(with), 36u);
  EXPECT_EQ(width(with), 44u);
  ident.pop_back();
  EXPECT_THROW(m.generator.forward(pg, t.constant(lr), ident), std::invalid_argument);
}

TEST(Nets, GeneratorParameterGradientsMatchFiniteDifferences) {
  const auto cfg = tiny_config();
  Models m(cfg);
  m.init(9);
  scramble_condition(m, 10);
  const auto lr = random_lr(4, 5, 6);
  const auto hr = synth::natural_image(4, 20, 24);
  auto loss_of = [&](bool backprop) {
    ad::Tape<Real> t;
    auto pc = m.condition.params().bind(t);
    auto pg = m.generator.params().bind(t);
    auto mods = m.condition.forward(pc, t.constant(Shape{2}, {0.4, 0.8}));
    auto l = ad::l1_loss(m.generator.forward(pg, t.constant(lr), mods), t.constant(hr));
    if (backprop) t.backward(l);
    return l.item();
  };
  for (auto* p : m.all_params()) p->zero_grad();
  loss_of(true);
  Rng rng(12);
  std::size_t checked = 0;
  double worst = 0;
  for (auto* s : {&m.condition.params(), &m.generator.params()})
    for (auto& p : s->all())
      for (int k = 0; k < 3; ++k) {
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p.value.size() - 1)(rng);
        const double x0 = p.value[i], eps = 1e-5;
        p.value[i] = x0 + eps;
        const double fp = loss_of(false);
        p.value[i] = x0 - eps;
        const double fm = loss_of(false);
        p.value[i] = x0;
        const double num = (fp - fm) / (2 * eps), a = p.grad[i];
        worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3}));
        ++checked;
      }
  EXPECT_GT(checked, 40u);
  EXPECT_LE(worst, 1e-4);
}

TEST(Nets, TiledInferenceMatchesWholeImage) {
  Models m(tiny_config());
  m.init(21);
  scramble_condition(m, 22);
  const auto lr = random_lr(5, 37, 29);
  const auto whole = m.udem.score(lr, 1000);
  for (std::size_t tile : {8u, 13u, 16u}) {
    const auto tiled = m.udem.score(lr, tile);
    EXPECT_NEAR(tiled.s_n, whole.s_n, 1e-10) << tile;
    EXPECT_NEAR(tiled.s_b, whole.s_b, 1e-10) << tile;
  }
  const auto full = m.restore(lr, {0.6, 0.2}, 1000);
  for (std::size_t tile : {10u, 16u}) EXPECT_LE(max_abs_diff(m.restore(lr, {0.6, 0.2}, tile), full), 1e-10) << tile;
}

TEST(Nets, InputValidation) {
  Models m(tiny_config());
  m.init(1);
  EXPECT_THROW(m.udem.score(make_image(3, 2, 8)), ShapeError);
  EXPECT_THROW(m.udem.score(make_image(1, 8, 8)), ShapeError);
  EXPECT_THROW(m.restore(make_image(3, 8, 8), {std::nan(""), 0}), std::invalid_argument);
  EXPECT_THROW(ModelConfig::from_json({{"udem", {{"channels", 0}}}}), std::invalid_argument);
  EXPECT_EQ(ModelConfig::from_json(ModelConfig{}.to_json()).to_json(), ModelConfig{}.to_json());
}

TEST(Checkpoint, RoundTripIsByteIdenticalAndPreservesOutputs) {
  Checkpoint ck(tiny_config());
  ck.models.init(3);
  scramble_condition(ck.models, 4);
  ck.iteration = 17;
  ck.config["note"] = "x";
  ck.adam.step = 2;
  for (auto* p : ck.models.all_params()) {
    ck.adam.m.push_back(p->value);
    ck.adam.v.push_back(p->value);
  }
  const auto bytes = serialize(ck);
  const auto back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.iteration, 17u);
  EXPECT_EQ(back.adam.step, 2u);
  const auto lr = random_lr(6, 10, 10);
  EXPECT_EQ(back.models.udem.score(lr), ck.models.udem.score(lr));
  EXPECT_EQ(back.models.restore(lr, {0.1, 0.9}), ck.models.restore(lr, {0.1, 0.9}));

  const auto path = ::testing::TempDir() + "ckpt_roundtrip.bin";
  save_checkpoint(ck, path);
  EXPECT_EQ(read_file_bytes(path), bytes);
  EXPECT_EQ(serialize(load_checkpoint(path)), bytes);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  Checkpoint ck(tiny_config());
  ck.models.init(3);
  const auto bytes = serialize(ck);
  EXPECT_THROW(deserialize("garbage"), CheckpointError);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 8)), CheckpointError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), CheckpointError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(deserialize(bad_version), CheckpointError);
  // Tamper with the config inside the header; the stored hash no longer matches.
  auto tampered = bytes;
  const auto pos = tampered.find("\"slope\":0.2");
  ASSERT_NE(pos, std::string::npos);
  tampered.replace(pos, 11, "\"slope\":0.3");
  EXPECT_THROW(deserialize(tampered), CheckpointError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.bin"), CheckpointError);
}
