#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "dyad/baselines.hpp"
#include "dyad/errors.hpp"
#include "dyad/metrics.hpp"
#include "dyad/synth.hpp"

namespace dyad {
namespace {

constexpr std::size_t kDm = 4, kDa = 5;

SynthOptions small() {
  SynthOptions o;
  o.expression_dim = kDm;
  o.audio_dim = kDa;
  o.noise = 0.0;
  return o;
}

std::vector<DyadSample> samples(std::size_t n, std::uint64_t seed0 = 10, std::size_t len = 128) {
  std::vector<DyadSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_dyad(seed0 + i, len, 3, small()));
  return out;
}

// Random bank entries without any synthetic structure.
DyadSample random_sample(std::size_t len, Rng& rng) {
  DyadSample s;
  s.speaker_motion = MotionSequence(kDm, len);
  s.listener_motion = MotionSequence(kDm, len);
  for (float& v : s.speaker_motion.values()) v = static_cast<float>(rng.normal());
  for (float& v : s.listener_motion.values()) v = static_cast<float>(rng.normal());
  s.speaker_audio.feature_dim = kDa;
  s.speaker_audio.values.resize(4 * len * kDa);
  for (float& v : s.speaker_audio.values) v = static_cast<float>(rng.normal());
  return s;
}

bool in_bank(const TrainBank& bank, const MotionSequence& seq) {
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (bank.entry(i).listener_motion == seq) return true;
  }
  return false;
}

TEST(TrainBank, CutsNonOverlappingWindows) {
  const auto bank = TrainBank::build(samples(3, 10, 150));
  EXPECT_EQ(bank.size(), 6u);  // two full windows per sample
  EXPECT_EQ(bank.entry(1).speaker_motion, samples(1, 10, 150)[0].speaker_motion.slice(64, 64));
  EXPECT_EQ(bank.entry(0).speaker_audio.length(), 256u);
}

TEST(NnMotion, ExactQueryReturnsPair) {
  const auto bank = TrainBank::build(samples(4));
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_EQ(nn_motion(bank, bank.entry(i).speaker_motion), bank.entry(i).listener_motion);
  }
}

TEST(NnMotion, MatchesExhaustiveScan) {
  Rng rng(5);
  std::vector<DyadSample> data;
  for (int i = 0; i < 500; ++i) data.push_back(random_sample(64, rng));
  const auto bank = TrainBank::build(data);
  for (int q = 0; q < 20; ++q) {
    const DyadSample query = random_sample(64, rng);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t i = 0; i < data.size(); ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < query.speaker_motion.values().size(); ++j) {
        d += std::pow(double(query.speaker_motion.values()[j]) - data[i].speaker_motion.values()[j], 2);
      }
      if (d < best_d) best_d = d, best = i;
    }
    EXPECT_EQ(nearest_motion_index(bank, query.speaker_motion), best);
  }
}

TEST(NnMotion, TiesPickLowestIndex) {
  Rng rng(1);
  auto a = random_sample(64, rng);
  auto b = a;
  for (float& v : b.listener_motion.values()) v += 1.0f;
  const auto bank = TrainBank::build({a, b});
  EXPECT_EQ(nearest_motion_index(bank, a.speaker_motion), 0u);
  const auto reversed = TrainBank::build({b, a});
  EXPECT_EQ(nn_motion(reversed, a.speaker_motion), b.listener_motion);
}

TEST(NnMotion, EmptyBankAndWrongLength) {
  const TrainBank empty = TrainBank::build({});
  Rng rng(2);
  const auto s = random_sample(64, rng);
  EXPECT_THROW(nn_motion(empty, s.speaker_motion), EmptyInput);
  EXPECT_THROW(nn_audio(empty, s.speaker_audio), EmptyInput);
  const auto bank = TrainBank::build({s});
  EXPECT_THROW(nn_motion(bank, s.speaker_motion.slice(0, 32)), ShapeError);
}

TEST(NnAudio, StatisticsOracle) {
  AudioFeatureSequence a;
  a.feature_dim = 2;
  a.values = {1, 10, 3, 10, 5, 10, 7, 10};
  const auto s = audio_statistics(a);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_DOUBLE_EQ(s[0], 4.0);
  EXPECT_DOUBLE_EQ(s[1], 10.0);
  EXPECT_DOUBLE_EQ(s[2], std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(s[3], 0.0);
}

TEST(NnAudio, SilenceFindsSilentEntry) {
  Rng rng(3);
  std::vector<DyadSample> data;
  for (int i = 0; i < 6; ++i) data.push_back(random_sample(64, rng));
  std::fill(data[4].speaker_audio.values.begin(), data[4].speaker_audio.values.end(), -100.0f);
  const auto bank = TrainBank::build(data);
  AudioFeatureSequence silence = data[4].speaker_audio;
  EXPECT_EQ(nn_audio(bank, silence), data[4].listener_motion);
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(nearest_audio_index(bank, data[i].speaker_audio), i);
}

TEST(NnAudio, MatchesExhaustiveScan) {
  Rng rng(8);
  std::vector<DyadSample> data;
  for (int i = 0; i < 200; ++i) data.push_back(random_sample(64, rng));
  const auto bank = TrainBank::build(data);
  for (int q = 0; q < 10; ++q) {
    const auto query = random_sample(64, rng);
    const auto qs = audio_statistics(query.speaker_audio);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto ks = audio_statistics(data[i].speaker_audio);
      double d = 0.0;
      for (std::size_t j = 0; j < ks.size(); ++j) d += (qs[j] - ks[j]) * (qs[j] - ks[j]);
      if (d < best_d) best_d = d, best = i;
    }
    EXPECT_EQ(nearest_audio_index(bank, query.speaker_audio), best);
  }
}

TEST(RandomWindow, DeterministicVerbatimAndUniform) {
  Rng rng(4);
  std::vector<DyadSample> data;
  for (int i = 0; i < 5; ++i) data.push_back(random_sample(64, rng));
  const auto bank = TrainBank::build(data);
  Rng a(9), b(9);
  EXPECT_EQ(random_window(bank, a), random_window(bank, b));
  std::vector<int> counts(5, 0);
  Rng r(10);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto w = random_window(bank, r);
    for (std::size_t k = 0; k < 5; ++k) {
      if (bank.entry(k).listener_motion == w) ++counts[k];
    }
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += std::pow(c - n / 5.0, 2) / (n / 5.0);
  EXPECT_LT(chi2, 13.277);  // 99th percentile, 4 dof
}

TEST(Median, PerCoordinateOracle) {
  Rng rng(6);
  std::vector<DyadSample> data;
  for (int i = 0; i < 3; ++i) data.push_back(random_sample(64, rng));
  const auto bank = TrainBank::build(data);
  const auto med = median_pose(bank);
  ASSERT_EQ(med.length(), 64u);
  for (std::size_t c = 0; c < kDm + 3; ++c) {
    std::vector<double> col;
    for (const auto& d : data) {
      for (std::size_t t = 0; t < 64; ++t) col.push_back(d.listener_motion.at(t, c));
    }
    std::sort(col.begin(), col.end());
    const double expected = 0.5 * (col[95] + col[96]);
    for (std::size_t t = 0; t < 64; ++t) EXPECT_FLOAT_EQ(med.at(t, c), static_cast<float>(expected));
  }
  EXPECT_EQ(metrics::variation(metrics::extract({med}, metrics::Stream::Expression)), 0.0);
}

TEST(Median, IdenticalFrames) {
  DyadSample s;
  Rng rng(1);
  s = random_sample(64, rng);
  for (std::size_t t = 1; t < 64; ++t) {
    std::copy(s.listener_motion.row(0).begin(), s.listener_motion.row(0).end(), s.listener_motion.row(t).begin());
  }
  const auto med = median_pose(TrainBank::build({s, s}));
  EXPECT_EQ(med, s.listener_motion);
}

TEST(Mirror, ConstantAndIdentity) {
  MotionSequence c(kDm, std::size_t{20});
  for (std::size_t t = 0; t < 20; ++t) {
    for (std::size_t j = 0; j < c.channels(); ++j) c.at(t, j) = static_cast<float>(j) * 0.1f;
  }
  EXPECT_EQ(mirror(c, 3), c);
  Rng rng(2);
  const auto s = random_sample(30, rng).speaker_motion;
  EXPECT_EQ(mirror(s, 0), s);
}

TEST(Mirror, ReflectivePadding) {
  MotionSequence s(1, std::size_t{4});
  for (std::size_t t = 0; t < 4; ++t) s.at(t, 0) = static_cast<float>(t);  // 0 1 2 3
  const auto m = mirror(s, 1);
  EXPECT_FLOAT_EQ(m.at(0, 0), (1.0f + 0.0f + 1.0f) / 3.0f);
  EXPECT_FLOAT_EQ(m.at(1, 0), 1.0f);
  EXPECT_FLOAT_EQ(m.at(3, 0), (2.0f + 3.0f + 2.0f) / 3.0f);
}

TEST(Mirror, TracksSmoothSpeaker) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = synth_dyad(seed, 64, 1, small());
    const auto out = mirror(d.speaker_motion);
    const auto a = metrics::project_1d(d.speaker_motion, metrics::Channel::ExpressionSmile);
    const auto b = metrics::project_1d(out, metrics::Channel::ExpressionSmile);
    EXPECT_GE(metrics::pcc(a, b), 0.98);
  }
}

TEST(DelayedMirror, ShiftAndEdge) {
  Rng rng(3);
  const auto s = random_sample(64, rng).speaker_motion;
  const auto m = mirror(s, 3);
  const auto d = delayed_mirror(s, 17, 3);
  for (std::size_t t = 0; t < 64; ++t) {
    const auto expected = m.row(t >= 17 ? t - 17 : 0);
    EXPECT_TRUE(std::equal(expected.begin(), expected.end(), d.row(t).begin())) << t;
  }
  EXPECT_EQ(delayed_mirror(s, 0, 3), m);
}

TEST(DelayedMirror, PeakLagSeventeen) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = synth_dyad(seed, 256, 1, small());
    const auto out = delayed_mirror(d.speaker_motion);
    const auto a = metrics::project_1d(d.speaker_motion, metrics::Channel::ExpressionSmile);
    const auto b = metrics::project_1d(out, metrics::Channel::ExpressionSmile);
    EXPECT_EQ(metrics::tlcc(a, b, 60).peak_lag, 17) << seed;
  }
}

TEST(RandomExpression, FramesComeFromBank) {
  const auto bank = TrainBank::build(samples(2));
  Rng a(7), b(7);
  const auto out = random_expression(bank, a);
  EXPECT_EQ(out, random_expression(bank, b));
  for (std::size_t t = 0; t < out.length(); ++t) {
    bool found = false;
    for (std::size_t i = 0; i < bank.size() && !found; ++i) {
      const auto& seq = bank.entry(i).listener_motion;
      for (std::size_t u = 0; u < seq.length() && !found; ++u) {
        found = std::equal(seq.row(u).begin(), seq.row(u).end(), out.row(t).begin());
      }
    }
    EXPECT_TRUE(found) << t;
  }
}

TEST(RandomExpression, VariesMoreThanTruth) {
  const auto data = samples(6);
  const auto bank = TrainBank::build(data);
  std::vector<MotionSequence> gt, rnd;
  Rng rng(1);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    gt.push_back(bank.entry(i).listener_motion);
    rnd.push_back(random_expression(bank, rng));
  }
  using metrics::Stream;
  EXPECT_GT(metrics::variation(metrics::extract(rnd, Stream::Expression)),
            metrics::variation(metrics::extract(gt, Stream::Expression)));
}

TEST(RandomWalk, TokensUniform) {
  Rng rng(12);
  const auto tokens = random_walk_tokens(10, 20000, rng);
  std::vector<int> counts(10, 0);
  for (int t : tokens) ++counts[t];
  double chi2 = 0.0;
  for (int c : counts) chi2 += std::pow(c - 2000.0, 2) / 2000.0;
  EXPECT_LT(chi2, 21.666);  // 99th percentile, 9 dof
}

TEST(RandomWalk, DecodedLength) {
  VqVaeConfig c;
  c.input_dim = kDm + 3;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 16;
  c.codebook_size = 10;
  c.latent_dim = 4;
  VqVae vq(c, 1);
  vq.freeze();
  Rng rng(1);
  EXPECT_EQ(codebook_random_walk(vq, 8, rng).length(), 64u);
}

TEST(Registry, RunsEveryBaseline) {
  const auto data = samples(3);
  const auto bank = TrainBank::build(data);
  VqVaeConfig c;
  c.input_dim = kDm + 3;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 16;
  c.codebook_size = 10;
  c.latent_dim = 4;
  VqVae vq(c, 1);
  vq.freeze();
  const BaselineContext ctx{&bank, &vq};
  const auto query = window(synth_dyad(99, 64, 3, small()), 0, 64);
  for (const auto& name : baseline_names()) {
    Rng a(5), b(5);
    const auto out = run_baseline(name, ctx, query, a);
    EXPECT_EQ(out.length(), 64u) << name;
    EXPECT_EQ(out, run_baseline(name, ctx, query, b)) << name;
    if (name == "nn_motion" || name == "nn_audio" || name == "random") EXPECT_TRUE(in_bank(bank, out)) << name;
  }
  Rng rng(1);
  EXPECT_THROW(run_baseline("lfi", ctx, query, rng), ConfigError);
  EXPECT_THROW(run_baseline("median", BaselineContext{}, query, rng), ContractError);
}

}  // namespace
}  // namespace dyad
