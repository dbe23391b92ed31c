#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "dyad/errors.hpp"
#include "dyad/rng.hpp"
#include "dyad/speaker.hpp"

namespace dyad {
namespace {

using ad::Tensor;

SpeakerConfig tiny(Fusion fusion = Fusion::Cross) {
  SpeakerConfig c;
  c.motion_dim = 5;
  c.audio_dim = 7;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.ffn_dim = 16;
  c.fusion = fusion;
  return c;
}

Tensor random_tensor(ad::Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return Tensor::from(std::move(shape), std::move(v), grad);
}

AudioFeatureSequence random_audio(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  AudioFeatureSequence a;
  a.feature_dim = dim;
  a.rate_multiple = 4;
  Rng rng(seed);
  a.values.resize(frames * dim);
  for (float& x : a.values) x = static_cast<float>(rng.normal());
  return a;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

TEST(PoolAudio, ConstantStaysConstant) {
  AudioFeatureSequence a;
  a.feature_dim = 3;
  a.values.assign(40 * 3, 2.5f);
  const auto out = pool_audio(a, 10);
  ASSERT_EQ(out.size(), 30u);
  for (float v : out) EXPECT_EQ(v, 2.5f);
}

TEST(PoolAudio, BlockwiseMaxOracle) {
  const auto a = random_audio(128, 6, 3);
  const auto out = pool_audio(a, 32);
  ASSERT_EQ(out.size(), 32u * 6);
  for (std::size_t t = 0; t < 32; ++t) {
    for (std::size_t j = 0; j < 6; ++j) {
      float m = -INFINITY;
      for (std::size_t u = 4 * t; u < 4 * t + 4; ++u) m = std::max(m, a.values[u * 6 + j]);
      EXPECT_EQ(out[t * 6 + j], m);
    }
  }
}

TEST(PoolAudio, SpikeLandsInItsBlock) {
  AudioFeatureSequence a;
  a.feature_dim = 1;
  a.values.assign(32, 0.0f);
  a.values[5] = 1.0f;
  const auto out = pool_audio(a, 8);
  for (std::size_t t = 0; t < 8; ++t) EXPECT_EQ(out[t], t == 1 ? 1.0f : 0.0f);
}

TEST(PoolAudio, ToleratesPaddingOnly) {
  EXPECT_NO_THROW(pool_audio(random_audio(126, 2, 1), 32));
  EXPECT_NO_THROW(pool_audio(random_audio(131, 2, 1), 32));
  EXPECT_THROW(pool_audio(random_audio(124, 2, 1), 32), ShapeError);
  EXPECT_THROW(pool_audio(random_audio(132, 2, 1), 32), ShapeError);
}

TEST(Attention, ZeroQueriesAverageValues) {
  ParameterStore store;
  Rng rng(4);
  auto attn = nn::MultiHeadAttention::create(store, "a", 8, 2, rng);
  std::fill(attn.q.weight.data().begin(), attn.q.weight.data().end(), 0.0f);
  std::fill(attn.q.bias.data().begin(), attn.q.bias.data().end(), 0.0f);
  const Tensor query = random_tensor({1, 3, 8}, 5), kv = random_tensor({1, 6, 8}, 6);
  ad::NoGradGuard g;
  Tensor w;
  const Tensor out = attn(query, kv, nullptr, &w);
  for (float x : w.data()) EXPECT_NEAR(x, 1.0 / 6.0, 1e-6);
  // o(mean of v rows) is the same for every query row.
  std::vector<float> mean(8, 0.0f);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t j = 0; j < 8; ++j) mean[j] += kv.data()[r * 8 + j] / 6.0f;
  }
  const Tensor expected = attn.o(attn.v(Tensor::from({1, 1, 8}, mean)));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_LT(max_abs_diff(out.data().subspan(r * 8, 8), expected.data()), 1e-5);
  }
}

TEST(Attention, LargeLogitsSelectOneRow) {
  ParameterStore store;
  Rng rng(7);
  auto attn = nn::MultiHeadAttention::create(store, "a", 4, 1, rng);
  for (auto* lin : {&attn.q, &attn.k}) {
    auto w = lin->weight.data();
    std::fill(w.begin(), w.end(), 0.0f);
    for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0f;
    std::fill(lin->bias.data().begin(), lin->bias.data().end(), 0.0f);
  }
  std::vector<float> kv_rows(16, 0.0f);
  for (std::size_t i = 0; i < 4; ++i) kv_rows[i * 4 + i] = 1.0f;
  const Tensor kv = Tensor::from({1, 4, 4}, kv_rows);
  const Tensor query = Tensor::from({1, 1, 4}, {0.0f, 0.0f, 100.0f, 0.0f});
  ad::NoGradGuard g;
  const Tensor out = attn(query, kv);
  const Tensor expected = attn.o(attn.v(Tensor::from({1, 1, 4}, {0.0f, 0.0f, 1.0f, 0.0f})));
  EXPECT_LT(max_abs_diff(out.data(), expected.data()), 1e-5);
}

TEST(SpeakerEncoder, AttentionRowsSumToOne) {
  ParameterStore store;
  Rng rng(1);
  const auto enc = SpeakerEncoder::create(store, "s", tiny(), rng);
  std::vector<Tensor> weights;
  ad::NoGradGuard g;
  enc.fuse(random_tensor({2, 40, 5}, 2), random_tensor({2, 40, 7}, 3), &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const Tensor& w : weights) {
    const std::size_t lk = w.dim(2);
    for (std::size_t r = 0; r < w.size() / lk; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < lk; ++j) s += w.data()[r * lk + j];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SpeakerEncoder, OutputStepsMatchTokens) {
  ParameterStore store;
  Rng rng(2);
  const auto enc = SpeakerEncoder::create(store, "s", tiny(), rng);
  ad::NoGradGuard g;
  EXPECT_EQ(enc(random_tensor({1, 32, 5}, 1), random_tensor({1, 32, 7}, 2)).shape(), (ad::Shape{1, 4, 8}));
  EXPECT_EQ(enc(random_tensor({3, 40, 5}, 1), random_tensor({3, 40, 7}, 2)).shape(), (ad::Shape{3, 4, 8}));
  EXPECT_THROW(enc(random_tensor({1, 36, 5}, 1), random_tensor({1, 36, 7}, 2)), ShapeError);
  EXPECT_THROW(enc(random_tensor({1, 32, 5}, 1), random_tensor({1, 40, 7}, 2)), ShapeError);

  auto cfg = tiny();
  cfg.extra_step = true;
  ParameterStore store2;
  const auto enc5 = SpeakerEncoder::create(store2, "s", cfg, rng);
  EXPECT_EQ(enc5(random_tensor({1, 40, 5}, 1), random_tensor({1, 40, 7}, 2)).shape(), (ad::Shape{1, 5, 8}));
}

TEST(SpeakerEncoder, BothModalitiesMatter) {
  for (Fusion f : {Fusion::Cross, Fusion::Concat}) {
    ParameterStore store;
    Rng rng(3);
    const auto enc = SpeakerEncoder::create(store, "s", tiny(f), rng);
    ad::NoGradGuard g;
    const Tensor motion = random_tensor({1, 40, 5}, 4), audio = random_tensor({1, 40, 7}, 5);
    const Tensor base = enc(motion, audio);

    std::vector<float> shuffled(audio.data().begin(), audio.data().end());
    for (std::size_t t = 0; t < 20; ++t) {
      std::swap_ranges(shuffled.begin() + t * 7, shuffled.begin() + t * 7 + 7, shuffled.begin() + (39 - t) * 7);
    }
    const Tensor permuted = enc(motion, Tensor::from({1, 40, 7}, shuffled));
    EXPECT_GT(max_abs_diff(base.data(), permuted.data()), 1e-4) << to_string(f);

    const Tensor silent_motion = enc(Tensor::zeros({1, 40, 5}), audio);
    EXPECT_GT(max_abs_diff(base.data(), silent_motion.data()), 1e-4) << to_string(f);
  }
}

TEST(SpeakerEncoder, GradientReachesBothInputs) {
  for (Fusion f : {Fusion::Cross, Fusion::Concat, Fusion::MotionOnly, Fusion::AudioOnly}) {
    ParameterStore store;
    Rng rng(9);
    const auto enc = SpeakerEncoder::create(store, "s", tiny(f), rng);
    Tensor motion = random_tensor({1, 40, 5}, 10, true), audio = random_tensor({1, 40, 7}, 11, true);
    ad::backward(ad::sum(ad::square(enc(motion, audio))));
    auto norm = [](std::span<const float> g) {
      double s = 0.0;
      for (float x : g) s += double(x) * x;
      return s;
    };
    const double gm = norm(motion.grad()), ga = norm(audio.grad());
    if (f != Fusion::AudioOnly) EXPECT_GT(gm, 0.0) << to_string(f);
    if (f != Fusion::MotionOnly) EXPECT_GT(ga, 0.0) << to_string(f);
    if (f == Fusion::AudioOnly) EXPECT_EQ(gm, 0.0);
    if (f == Fusion::MotionOnly) EXPECT_EQ(ga, 0.0);
  }
}

TEST(Fusion, NamesRoundTrip) {
  for (Fusion f : {Fusion::Cross, Fusion::Concat, Fusion::MotionOnly, Fusion::AudioOnly}) {
    EXPECT_EQ(parse_fusion(to_string(f)), f);
  }
  EXPECT_THROW(parse_fusion("early"), ConfigError);
}

TEST(SpeakerConfig, JsonRoundTrip) {
  auto c = tiny(Fusion::Concat);
  c.extra_step = true;
  const auto back = SpeakerConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.context_frames(), 40u);
  EXPECT_THROW(SpeakerConfig::from_json(nlohmann::json::object()), FormatError);
}

}  // namespace
}  // namespace dyad
