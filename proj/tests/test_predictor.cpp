#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "dyad/errors.hpp"
#include "dyad/predictor.hpp"
#include "dyad/synth.hpp"

namespace dyad {
namespace {

constexpr std::size_t kDm = 6, kDa = 7;

SynthOptions small_synth() {
  SynthOptions o;
  o.expression_dim = kDm;
  o.audio_dim = kDa;
  o.noise = 0.0;
  return o;
}

VqVae frozen_vq(std::size_t k = 200) {
  VqVaeConfig c;
  c.input_dim = kDm + 3;
  c.model_dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.codebook_size = k;
  c.latent_dim = 8;
  VqVae vq(c, 3);
  vq.freeze();
  return vq;
}

ListenerModel tiny_model(std::size_t k = 200, std::uint64_t seed = 5) {
  SpeakerConfig s;
  s.motion_dim = kDm + 3;
  s.audio_dim = kDa;
  s.model_dim = 16;
  s.heads = 2;
  s.layers = 1;
  s.ffn_dim = 32;
  PredictorConfig p;
  p.codebook_size = k;
  p.model_dim = 16;
  p.heads = 2;
  p.layers = 2;
  p.ffn_dim = 32;
  return ListenerModel(s, p, seed);
}

SpeakerStreams streams(std::uint64_t seed, std::size_t len = 64) {
  return speaker_streams(synth_dyad(seed, len, 1, small_synth()));
}

TEST(Predictor, DistributionIsNormalised) {
  const auto m = tiny_model();
  const auto s = streams(1);
  const std::vector<int> past{3, 4, 5, 6};
  const std::vector<std::uint8_t> vis{1, 1, 1, 1};
  const auto p = predict_dist(m, s, 4, past, vis);
  ASSERT_EQ(p.size(), 200u);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
  for (double v : p) EXPECT_GT(v, 0.0);
}

TEST(Predictor, LogitShapeAndErrors) {
  const auto m = tiny_model(20);
  const auto motion = ad::Tensor::zeros({2, 40, kDm + 3});
  const auto audio = ad::Tensor::zeros({2, 40, kDa});
  std::vector<int> past(8, 1);
  std::vector<std::uint8_t> vis(8, 1);
  ad::NoGradGuard g;
  EXPECT_EQ(m.logits(motion, audio, past, vis).shape(), (ad::Shape{2, 4, 20}));
  EXPECT_THROW(m.logits(motion, audio, std::span<const int>(past).first(7), vis), ShapeError);
  EXPECT_THROW(m.logits(motion, audio, past, std::span<const std::uint8_t>(vis).first(4)), ShapeError);
  past[3] = 20;
  EXPECT_THROW(m.logits(motion, audio, past, vis), RangeError);
  vis[3] = 0;  // hidden tokens are never looked up
  EXPECT_NO_THROW(m.logits(motion, audio, past, vis));
}

TEST(Predictor, HiddenTokensCarryNoInformation) {
  const auto m = tiny_model(30);
  const auto s = streams(2);
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> past(4);
    std::vector<std::uint8_t> vis(4);
    for (std::size_t j = 0; j < 4; ++j) {
      past[j] = static_cast<int>(rng.below(30));
      vis[j] = static_cast<std::uint8_t>(rng.below(2));
    }
    const std::size_t step = 4 + rng.below(4);
    const auto before = predict_dist(m, s, step, past, vis);
    for (std::size_t j = 0; j < 4; ++j) {
      if (!vis[j]) past[j] = static_cast<int>(rng.below(30));
    }
    EXPECT_EQ(predict_dist(m, s, step, past, vis), before);
  }
}

TEST(Predictor, VisibleTokensDoMatter) {
  const auto m = tiny_model(30);
  const auto s = streams(2);
  const std::vector<std::uint8_t> vis{1, 1, 1, 1};
  EXPECT_NE(predict_dist(m, s, 5, std::vector<int>{1, 2, 3, 4}, vis),
            predict_dist(m, s, 5, std::vector<int>{1, 2, 3, 9}, vis));
}

TEST(Predictor, FullyMaskedIsDeterministic) {
  const auto m = tiny_model();
  const auto s = streams(3);
  const std::vector<int> past{0, 0, 0, 0};
  const std::vector<std::uint8_t> vis{0, 0, 0, 0};
  EXPECT_EQ(predict_dist(m, s, 0, past, vis), predict_dist(m, s, 0, past, vis));
}

TEST(Predictor, SpeakerContextRange) {
  const auto s = streams(4);
  std::vector<float> motion, audio;
  speaker_window(s, 7, 4, motion, audio);
  EXPECT_EQ(motion.size(), 40u * (kDm + 3));
  EXPECT_EQ(audio.size(), 40u * kDa);
  // the window ends with the look-ahead block of the predicted step
  EXPECT_EQ(motion.back(), s.motion.at(63, kDm + 2));
  motion.clear();
  speaker_window(s, 0, 4, motion, audio);
  EXPECT_EQ(motion[0], s.motion.at(0, 0));  // edge-replicated
  EXPECT_THROW(speaker_window(s, 8, 4, motion, audio), RangeError);
}

TEST(TrainPredictor, RequiresFrozenVqVae) {
  auto m = tiny_model(12);
  VqVaeConfig c;
  c.input_dim = kDm + 3;
  c.model_dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.codebook_size = 12;
  c.latent_dim = 8;
  VqVae vq(c, 1);
  AdamState adam;
  const std::vector<DyadSample> data{synth_dyad(1, 64, 1, small_synth())};
  EXPECT_THROW(train_predictor(m, vq, data, {}, {}, adam), ContractError);
}

TEST(TrainPredictor, InitialCrossEntropyNearLogK) {
  auto m = tiny_model();
  const auto vq = frozen_vq();
  std::vector<DyadSample> data;
  for (std::uint64_t i = 0; i < 4; ++i) data.push_back(synth_dyad(100 + i, 64, 1, small_synth()));
  PredictorTrainConfig cfg;
  cfg.epochs = 0;
  AdamState adam;
  const auto report = train_predictor(m, vq, data, {}, cfg, adam);
  EXPECT_NEAR(report.initial_ce, std::log(200.0), 0.3);
}

TEST(TrainPredictor, LossFallsOnTinyData) {
  auto m = tiny_model(12);
  const auto vq = frozen_vq(12);
  std::vector<DyadSample> data;
  for (std::uint64_t i = 0; i < 2; ++i) data.push_back(synth_dyad(200 + i, 64, 1, small_synth()));
  PredictorTrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.base_lr = 0.5;
  cfg.warmup = 20;
  AdamState adam;
  const auto report = train_predictor(m, vq, data, data, cfg, adam);
  EXPECT_LT(report.epochs.back().next_token_ce, report.epochs.front().next_token_ce);
}

TEST(Nucleus, OneHotAlwaysWins) {
  const std::vector<double> d{0.0, 0.0, 1.0, 0.0};
  Rng rng(1);
  for (double p : {0.01, 0.5, 1.0}) {
    for (int i = 0; i < 100; ++i) EXPECT_EQ(nucleus_sample(d, p, rng), 2u);
  }
}

TEST(Nucleus, FullMassMatchesSource) {
  const std::vector<double> d{0.1, 0.25, 0.05, 0.4, 0.2};
  Rng rng(7);
  std::vector<int> counts(d.size(), 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[nucleus_sample(d, 1.0, rng)];
  double chi2 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) chi2 += std::pow(counts[i] - n * d[i], 2) / (n * d[i]);
  EXPECT_LT(chi2, 13.277);  // chi-square 99th percentile, 4 dof
}

TEST(Nucleus, TruncatesToTopMass) {
  const std::vector<double> d{0.5, 0.3, 0.2};
  EXPECT_EQ(nucleus_set(d, 0.6), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(nucleus_set(d, 0.5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(nucleus_set(d, 0.8), (std::vector<std::size_t>{0, 1}));
  Rng rng(3);
  int zero = 0, one = 0;
  for (int i = 0; i < 16000; ++i) {
    const auto k = nucleus_sample(d, 0.6, rng);
    ASSERT_LT(k, 2u);
    (k == 0 ? zero : one)++;
  }
  EXPECT_NEAR(static_cast<double>(zero) / one, 5.0 / 3.0, 0.1);
}

TEST(Nucleus, TiesKeepIndexOrder) {
  const std::vector<double> d{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(nucleus_set(d, 0.5), (std::vector<std::size_t>{0, 1}));
  const std::vector<double> e{0.2, 0.4, 0.4};
  EXPECT_EQ(nucleus_set(e, 0.3), (std::vector<std::size_t>{1}));
}

TEST(Nucleus, RejectsBadMass) {
  const std::vector<double> d{0.5, 0.5};
  Rng rng(1);
  EXPECT_THROW(nucleus_sample(d, 0.0, rng), ContractError);
  EXPECT_THROW(nucleus_sample(d, -0.1, rng), ContractError);
  EXPECT_THROW(nucleus_sample(d, 1.5, rng), ContractError);
}

TEST(Rollout, LengthAndContext) {
  const auto m = tiny_model();
  const auto vq = frozen_vq();
  const auto s = streams(5);
  Rng rng(1);
  const auto out = rollout(m, vq, s, 8, 0.9, rng);
  EXPECT_EQ(out.length(), 64u);
  EXPECT_EQ(out.channels(), kDm + 3);
  for (float v : out.values()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(rollout(m, vq, s, 9, 0.9, rng), RangeError);
}

TEST(Rollout, SeedsDiffer) {
  const auto m = tiny_model();
  const auto s = streams(6);
  Rng a(1), b(2), a2(1);
  const auto ta = rollout_tokens(m, s, 8, 0.9, a);
  EXPECT_NE(ta, rollout_tokens(m, s, 8, 0.9, b));
  EXPECT_EQ(ta, rollout_tokens(m, s, 8, 0.9, a2));
}

TEST(MultiSample, CurveIsNonIncreasing) {
  const auto m = tiny_model();
  const auto vq = frozen_vq();
  std::vector<SpeakerStreams> speakers;
  std::vector<MotionSequence> truth;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const auto d = synth_dyad(300 + i, 64, 1, small_synth());
    speakers.push_back(speaker_streams(d));
    truth.push_back(d.listener_motion);
  }
  const auto curve = multi_sample_min_l2(m, vq, speakers, truth, 4, 5, 0.9, 42);
  ASSERT_EQ(curve.size(), 5u);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i], curve[i - 1]);
  const auto first = multi_sample_min_l2(m, vq, speakers, truth, 4, 1, 0.9, 42);
  EXPECT_EQ(first[0], curve[0]);
  EXPECT_THROW(multi_sample_min_l2(m, vq, speakers, truth, 4, 0, 0.9, 42), ContractError);
}

TEST(ListenerModel, ConfigRoundTrip) {
  const auto m = tiny_model(17);
  const auto back = ListenerModel::from_json(m.to_json(), 5);
  EXPECT_EQ(back.to_json(), m.to_json());
  EXPECT_EQ(back.params().parameter_count(), m.params().parameter_count());
}

}  // namespace
}  // namespace dyad
