#include <gtest/gtest.h>

#include <cmath>

#include "envshift/pretrain.hpp"
#include "envshift/synthgen.hpp"
#include "oracles.hpp"

using namespace envshift;

namespace {

ScenarioConfig id_config(std::uint64_t seed) {
  ScenarioConfig c;
  c.regime = Regime::C;
  c.spurious_strength = 0.0;
  c.style_shift_scale = 0.0;
  c.seed = seed;
  return c;
}

ScenarioConfig small_config(std::uint64_t seed = 0) {
  ScenarioConfig c;
  c.n_train_envs = 3;
  c.n_test_envs = 1;
  c.samples_per_env = 40;
  c.seed = seed;
  return c;
}

nn::TrainConfig short_train(int epochs = 3) {
  nn::TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 16;
  t.seed = 5;
  return t;
}

EncoderSpec tiny_spec() {
  EncoderSpec s;
  s.hidden = {8};
  s.d_emb = 4;
  return s;
}

Sample make_sample(std::vector<double> f, int env, ContentLabel c, Split s = Split::Train) {
  return {std::move(f), env, c, s};
}

nn::MlpParams joined(const PretrainResult& r) { return nn::stack(r.encoder, r.head); }

}  // namespace

TEST(PretextLabels, MapsNormalClasses) {
  EnvDataset ds;
  ds.d_x = 1;
  ds.train_envs = {0};
  ds.test_envs = {1};
  ds.samples = {make_sample({0.0}, 0, ContentLabel::Normal0), make_sample({1.0}, 0, ContentLabel::Normal1),
                make_sample({2.0}, 0, ContentLabel::Normal0), make_sample({3.0}, 1, ContentLabel::Anomaly, Split::Test)};
  EXPECT_EQ(make_pretext_labels(ds), (std::vector<int>{0, 1, 0}));
}

TEST(PretextLabels, MissingClass) {
  EnvDataset ds;
  ds.d_x = 1;
  ds.train_envs = {0};
  ds.samples = {make_sample({0.0}, 0, ContentLabel::Normal0), make_sample({1.0}, 0, ContentLabel::Normal0)};
  EXPECT_THROW(make_pretext_labels(ds), MissingClass);
}

TEST(Erm, SeparatesNormalClassesInDistribution) {
  const EnvDataset ds = generate_scenario(id_config(0));
  nn::TrainConfig cfg;
  const PretrainResult r = train_erm(ds, cfg);
  EXPECT_GT(pretext_accuracy(r, ds, Split::Train), 0.95);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Erm, Deterministic) {
  const EnvDataset ds = generate_scenario(small_config());
  const auto a = train_erm(ds, short_train(), tiny_spec());
  const auto b = train_erm(ds, short_train(), tiny_spec());
  EXPECT_EQ(nn::serialize_mlp(a.encoder), nn::serialize_mlp(b.encoder));
}

TEST(Irm, ZeroLambdaMatchesEnvBatchedErm) {
  const EnvDataset ds = generate_scenario(small_config());
  PenaltyConfig pc;
  pc.irm_lambda = 0.0;
  pc.irm_warmup_lambda = 0.0;
  const auto irm = train_irm(ds, short_train(), pc, tiny_spec());
  const auto erm = train_erm_env_batched(ds, short_train(), tiny_spec());
  EXPECT_EQ(joined(irm).max_abs_diff(joined(erm)), 0.0);
  EXPECT_EQ(irm.epoch_loss, erm.epoch_loss);
}

TEST(Irm, PenaltyIsSquaredDummyScaleDerivative) {
  for (int draw = 0; draw < 20; ++draw) {
    Rng rng(RngHandle(static_cast<std::uint64_t>(draw), "irm"));
    Matrix z(7, 1), y(7, 1);
    for (int i = 0; i < 7; ++i) {
      z(i, 0) = 2.0 * rng.normal();
      y(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    const auto risk = [&](const Vector& s) { return nn::bce_with_logits(s(0) * z, y).value; };
    const double d = oracle::central_difference(risk, Vector::Ones(1), 1e-6)(0);
    const double value = irm_penalty(z, y).value;
    EXPECT_LT(std::abs(value - d * d) / std::max(d * d, 1e-12), 1e-4) << "draw " << draw;
  }
}

TEST(Irm, PenaltyGradientMatchesFiniteDifferences) {
  for (int draw = 0; draw < 20; ++draw) {
    Rng rng(RngHandle(static_cast<std::uint64_t>(draw), "irm-grad"));
    Matrix z(6, 1), y(6, 1);
    for (int i = 0; i < 6; ++i) {
      z(i, 0) = 2.0 * rng.normal();
      y(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    const Vector analytic = irm_penalty(z, y).grad_output.col(0);
    const Vector numeric =
        oracle::central_difference([&](const Vector& v) { return irm_penalty(Matrix(v), y).value; }, z.col(0), 1e-6);
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-4) << "draw " << draw;
  }
}

TEST(Irm, IdenticalEnvsGiveSingleEnvPenalty) {
  Matrix z(4, 1), y(4, 1);
  z << 0.3, -1.2, 2.0, 0.1;
  y << 1, 0, 1, 0;
  const double single = irm_penalty(z, y).value;
  EXPECT_EQ(0.5 * (irm_penalty(z, y).value + irm_penalty(z, y).value), single);
}

TEST(Irm, SingleEnvRejected) {
  ScenarioConfig c = small_config();
  c.n_train_envs = 1;
  const EnvDataset ds = generate_scenario(c);
  EXPECT_THROW(train_irm(ds, short_train(), PenaltyConfig{}, tiny_spec()), SingleEnv);
  EXPECT_THROW(train_fish(ds, short_train(), PenaltyConfig{}, tiny_spec()), SingleEnv);
}

TEST(Fish, ZeroMetaLrLeavesParameters) {
  const EnvDataset ds = generate_scenario(small_config());
  PenaltyConfig pc;
  pc.fish_meta_lr = 0.0;
  const auto r = train_fish(ds, short_train(), pc, tiny_spec());
  const nn::MlpParams init = init_classifier(ds.d_x, tiny_spec(), short_train().seed);
  EXPECT_EQ(joined(r).max_abs_diff(init), 0.0);
}

TEST(Fish, OneMetaStepOnTwinEnvsIsScaledSgd) {
  // Env 1 is an exact copy of env 0.
  const EnvDataset base = generate_scenario(small_config(3));
  EnvDataset ds;
  ds.d_x = base.d_x;
  ds.train_envs = {0, 1};
  ds.test_envs = {2};
  for (int e : {0, 1})
    for (const Sample& s : base.samples)
      if (s.env_id == 0) ds.samples.push_back(make_sample(s.features, e, s.content_label));
  const std::size_t per_env = ds.samples.size() / 2;

  nn::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<int>(per_env);
  cfg.seed = 2;
  PenaltyConfig pc;
  pc.fish_inner_steps = 1;
  pc.fish_meta_lr = 0.3;
  std::vector<std::vector<std::size_t>> batches;
  TrainObserver obs;
  obs.on_batch = [&](std::span<const std::size_t> rows) { batches.emplace_back(rows.begin(), rows.end()); };
  const auto r = train_fish(ds, cfg, pc, tiny_spec(), &obs);
  ASSERT_EQ(batches.size(), 2u);

  const nn::MlpParams start = init_classifier(ds.d_x, tiny_spec(), cfg.seed);
  nn::MlpParams sgd = start;
  for (const auto& rows : batches) {
    nn::Batch b;
    b.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.d_x);
    b.targets.resize(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Sample& s = ds.samples[rows[i]];
      for (int j = 0; j < ds.d_x; ++j) b.inputs(static_cast<Eigen::Index>(i), j) = s.features[static_cast<std::size_t>(j)];
      b.targets(static_cast<Eigen::Index>(i), 0) = s.content_label == ContentLabel::Normal1 ? 1.0 : 0.0;
    }
    sgd.axpy(-pc.fish_inner_lr, nn::loss_and_grad(sgd, b, nn::LossKind::BCE).grads);
  }
  nn::MlpParams expected = start;
  nn::MlpParams delta = sgd;
  delta.axpy(-1.0, start);
  expected.axpy(pc.fish_meta_lr, delta);
  EXPECT_LT(joined(r).max_abs_diff(expected), 1e-10);
}

TEST(Lisa, UnitLambdaMatchesErm) {
  const EnvDataset ds = generate_scenario(small_config());
  PenaltyConfig pc;
  pc.lisa_fixed_lambda = 1.0;
  const auto lisa = train_lisa(ds, short_train(), pc, tiny_spec());
  const auto erm = train_erm(ds, short_train(), tiny_spec());
  EXPECT_LT(joined(lisa).max_abs_diff(joined(erm)), 1e-12);
}

TEST(Lisa, MixedInputsFollowDefinition) {
  const EnvDataset ds = generate_scenario(small_config());
  std::vector<MixRecord> mixes;
  std::vector<Matrix> inputs;
  TrainObserver obs;
  obs.on_mix = [&](const MixRecord& m) { mixes.push_back(m); };
  obs.on_mixed_inputs = [&](const Matrix& x) { inputs.push_back(x); };
  train_lisa(ds, short_train(1), PenaltyConfig{}, tiny_spec(), &obs);
  ASSERT_FALSE(inputs.empty());
  const Matrix& first = inputs.front();
  for (Eigen::Index r = 0; r < first.rows(); ++r) {
    const MixRecord& m = mixes[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < first.cols(); ++j) {
      const double a = ds.samples[m.row_a].features[static_cast<std::size_t>(j)];
      const double b = ds.samples[m.row_b].features[static_cast<std::size_t>(j)];
      EXPECT_NEAR(first(r, j), m.lambda * a + (1.0 - m.lambda) * b, 1e-15 * (1.0 + std::abs(a) + std::abs(b)));
    }
  }
}

TEST(Lisa, PairsShareLabelAndCrossEnvs) {
  const EnvDataset ds = generate_scenario(small_config());
  std::size_t pairs = 0;
  bool ok = true;
  TrainObserver obs;
  obs.on_mix = [&](const MixRecord& m) {
    ++pairs;
    ok = ok && m.label_a == m.label_b && ds.samples[m.row_a].content_label == ds.samples[m.row_b].content_label &&
         ds.samples[m.row_a].env_id != ds.samples[m.row_b].env_id && m.lambda > 0.0 && m.lambda < 1.0;
  };
  train_lisa(ds, short_train(90), PenaltyConfig{}, tiny_spec(), &obs);
  EXPECT_GE(pairs, 10000u);
  EXPECT_TRUE(ok);
}

TEST(Lisa, LabelInOneEnvIsAPairingError) {
  EnvDataset ds;
  ds.d_x = 1;
  ds.train_envs = {0, 1};
  ds.samples = {make_sample({0.0}, 0, ContentLabel::Normal0), make_sample({1.0}, 0, ContentLabel::Normal1),
                make_sample({2.0}, 1, ContentLabel::Normal0), make_sample({3.0}, 1, ContentLabel::Normal0)};
  EXPECT_THROW(train_lisa(ds, short_train(), PenaltyConfig{}, tiny_spec()), PairingError);
}

TEST(RandomEncoder, SeedControlsParameters) {
  const auto a = random_encoder(10, 6, 1), b = random_encoder(10, 6, 1), c = random_encoder(10, 6, 2);
  EXPECT_EQ(a.max_abs_diff(b), 0.0);
  EXPECT_GT(a.max_abs_diff(c), 0.0);
  EXPECT_TRUE(nn::forward(a, Matrix::Random(4, 10)).allFinite());
  EXPECT_THROW(random_encoder(0, 6, 1), ShapeError);
}

TEST(Pretrainers, NeverTouchTestRows) {
  const EnvDataset ds = generate_scenario(small_config());
  bool clean = true;
  std::size_t seen = 0;
  TrainObserver obs;
  obs.on_batch = [&](std::span<const std::size_t> rows) {
    for (std::size_t r : rows) {
      clean = clean && ds.samples[r].split == Split::Train;
      ++seen;
    }
  };
  train_erm(ds, short_train(), tiny_spec(), &obs);
  train_irm(ds, short_train(), PenaltyConfig{}, tiny_spec(), &obs);
  train_fish(ds, short_train(), PenaltyConfig{}, tiny_spec(), &obs);
  train_lisa(ds, short_train(), PenaltyConfig{}, tiny_spec(), &obs);
  EXPECT_GT(seen, 0u);
  EXPECT_TRUE(clean);
}

TEST(Pretrainers, EncoderOutputIsDEmb) {
  const EnvDataset ds = generate_scenario(small_config());
  EncoderSpec spec = tiny_spec();
  spec.d_emb = 7;
  EXPECT_EQ(train_erm(ds, short_train(1), spec).encoder.out_dim(), 7);
  EXPECT_EQ(train_irm(ds, short_train(1), PenaltyConfig{}, spec).encoder.out_dim(), 7);
  EXPECT_EQ(train_fish(ds, short_train(1), PenaltyConfig{}, spec).encoder.out_dim(), 7);
  EXPECT_EQ(train_lisa(ds, short_train(1), PenaltyConfig{}, spec).encoder.out_dim(), 7);
  EXPECT_EQ(random_encoder(ds.d_x, 7, 0).out_dim(), 7);
}

TEST(Pretrainers, EnvAwareMethodsMatchErmInDistribution) {
  double erm = 0, irm = 0, fish = 0, lisa = 0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    const EnvDataset ds = generate_scenario(id_config(static_cast<std::uint64_t>(s)));
    nn::TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    erm += pretext_accuracy(train_erm(ds, cfg), ds, Split::Test) / seeds;
    irm += pretext_accuracy(train_irm(ds, cfg, PenaltyConfig{}), ds, Split::Test) / seeds;
    fish += pretext_accuracy(train_fish(ds, cfg, PenaltyConfig{}), ds, Split::Test) / seeds;
    lisa += pretext_accuracy(train_lisa(ds, cfg, PenaltyConfig{}), ds, Split::Test) / seeds;
  }
  EXPECT_LT(std::abs(irm - erm), 0.05);
  EXPECT_LT(std::abs(fish - erm), 0.05);
  EXPECT_LT(std::abs(lisa - erm), 0.05);
}

TEST(PenaltyConfig, ReadsKeys) {
  const PenaltyConfig pc = PenaltyConfig::from_config(KeyValueConfig::parse("irm_lambda = 5\nlisa_alpha = 0.4\n"));
  EXPECT_EQ(pc.irm_lambda, 5.0);
  EXPECT_EQ(pc.lisa_alpha, 0.4);
  EXPECT_THROW(PenaltyConfig::from_config(KeyValueConfig::parse("fish_inner_steps = 0\n")), ConfigError);
}
