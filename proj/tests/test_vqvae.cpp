#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "dyad/checkpoint.hpp"
#include "dyad/errors.hpp"
#include "dyad/rng.hpp"
#include "dyad/synth.hpp"
#include "dyad/vqvae.hpp"
#include "gradcheck.hpp"

namespace dyad {
namespace {

using ad::Tensor;

VqVaeConfig tiny_config(std::size_t dm = 6) {
  VqVaeConfig c;
  c.input_dim = dm + 3;
  c.model_dim = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn_dim = 32;
  c.codebook_size = 12;
  c.latent_dim = 8;
  return c;
}

Tensor random_motion(std::size_t b, std::size_t t, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(b * t * c);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return Tensor::from({b, t, c}, std::move(v));
}

// Exhaustive nearest row with lowest-index ties, written independently.
std::vector<int> brute_force(const std::vector<float>& cb, std::size_t k, const std::vector<float>& z,
                             std::size_t dim) {
  std::vector<int> out;
  for (std::size_t i = 0; i < z.size() / dim; ++i) {
    std::vector<double> d(k);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < dim; ++j) d[c] += std::pow(double(z[i * dim + j]) - double(cb[c * dim + j]), 2);
    }
    out.push_back(static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin()));
  }
  return out;
}

TEST(VqVae, LatentLengthIsFramesOverEight) {
  const VqVae m(tiny_config(), 1);
  ad::NoGradGuard g;
  EXPECT_EQ(m.encode(random_motion(2, 32, 9, 1)).shape(), (ad::Shape{2, 4, 8}));
  EXPECT_EQ(m.encode(random_motion(1, 64, 9, 2)).shape(), (ad::Shape{1, 8, 8}));
  EXPECT_EQ(m.encode(random_motion(1, 40, 9, 3)).shape(), (ad::Shape{1, 5, 8}));
  EXPECT_THROW(m.encode(random_motion(1, 30, 9, 4)), ShapeError);
}

TEST(VqVae, LastFrameReachesLatent) {
  const VqVae m(tiny_config(), 2);
  ad::NoGradGuard g;
  Tensor a = random_motion(1, 32, 9, 5);
  Tensor b = a.clone();
  b.data()[31 * 9 + 2] += 1.0f;
  const Tensor za = m.encode(a), zb = m.encode(b);
  bool differs = false;
  for (std::size_t i = 0; i < za.size(); ++i) differs |= za.at(i) != zb.at(i);
  EXPECT_TRUE(differs);
}

TEST(VqVae, DecodeShapeAndDeterminism) {
  const VqVae m(tiny_config(), 3);
  ad::NoGradGuard g;
  const Tensor z = random_motion(1, 4, 8, 6);
  const Tensor a = m.decode(z), b = m.decode(z);
  EXPECT_EQ(a.shape(), (ad::Shape{1, 32, 9}));
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_EQ(m.decode(random_motion(1, 8, 8, 7)).shape(), (ad::Shape{1, 64, 9}));
  EXPECT_THROW(m.decode(random_motion(1, 4, 7, 8)), ShapeError);
}

TEST(Quantize, MatchesBruteForceIncludingTies) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng.below(40), dim = 1 + rng.below(6);
    std::vector<float> cb(k * dim), z(16 * dim);
    // Small integer grid makes exact ties common.
    for (float& v : cb) v = static_cast<float>(rng.below(3));
    for (float& v : z) v = static_cast<float>(rng.below(3)) + 0.5f * static_cast<float>(rng.below(2));
    EXPECT_EQ(nearest_codes(cb, k, z, dim), brute_force(cb, k, z, dim)) << "trial " << trial;
  }
}

TEST(Quantize, ExactRowAndSingleEntry) {
  VqVae m(tiny_config(), 4);
  const auto cb = m.codebook().data();
  std::vector<float> z(cb.begin() + 7 * 8, cb.begin() + 8 * 8);
  const Quantized q = m.quantize(Tensor::from({1, 1, 8}, z));
  EXPECT_EQ(q.indices, std::vector<int>{7});
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(q.codes.at(j), z[j]);

  std::vector<float> one{0.3f, -1.0f};
  EXPECT_EQ(nearest_codes(one, 1, std::vector<float>{5, 5, -2, 0, 1, 1}, 2), (std::vector<int>{0, 0, 0}));
  EXPECT_THROW(nearest_codes({}, 0, one, 2), ContractError);
}

TEST(Quantize, StraightThroughPassesDecoderGradient) {
  VqVae m(tiny_config(), 5);
  Rng rng(10);
  const Tensor proj = testing::random_tensor({1, 32, 9}, rng);
  Tensor latent = testing::random_tensor({1, 4, 8}, rng);
  const Quantized q = m.quantize(latent);
  ad::backward(ad::sum(ad::mul(m.decode(q.straight_through), proj)));

  Tensor codes = Tensor::from({1, 4, 8}, std::vector<float>(q.codes.data().begin(), q.codes.data().end()), true);
  ad::backward(ad::sum(ad::mul(m.decode(codes), proj)));
  for (std::size_t i = 0; i < latent.size(); ++i) EXPECT_NEAR(latent.grad()[i], codes.grad()[i], 1e-5f);
}

TEST(VqLoss, TermsMatchDirectOracle) {
  Rng rng(11);
  const Tensor x = testing::random_tensor({2, 8, 3}, rng), xh = testing::random_tensor({2, 8, 3}, rng);
  const Tensor z = testing::random_tensor({2, 1, 4}, rng), c = testing::random_tensor({2, 1, 4}, rng);
  const VqLoss l = vq_loss(x, xh, z, c, 0.25f);
  auto mse = [](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(double(a.at(i)) - double(b.at(i)), 2);
    return s / static_cast<double>(a.size());
  };
  EXPECT_NEAR(l.reconstruction.item(), mse(x, xh), 1e-5);
  EXPECT_NEAR(l.codebook.item(), mse(z, c), 1e-5);
  EXPECT_NEAR(l.commitment.item(), mse(z, c), 1e-5);
  EXPECT_NEAR(l.total.item(), mse(x, xh) + 1.25 * mse(z, c), 1e-5);
  EXPECT_THROW(vq_loss(x, xh, z, c, -0.1f), ContractError);
}

TEST(VqLoss, ZeroWhenReconstructedAndQuantised) {
  Rng rng(12);
  const Tensor x = testing::random_tensor({1, 8, 3}, rng), z = testing::random_tensor({1, 1, 4}, rng);
  EXPECT_EQ(vq_loss(x, x, z, z, 0.25f).total.item(), 0.0f);
}

TEST(VqLoss, CodebookTermLeavesEncoderUntouched) {
  VqVae m(tiny_config(), 6);
  const Tensor x = random_motion(1, 32, 9, 13);
  const Tensor latent = m.encode(x);
  const Quantized q = m.quantize(latent);
  const VqLoss l = vq_loss(x, x, latent, q.codes, 0.25f);
  m.params().zero_grad();
  ad::backward(l.codebook);
  for (auto& [name, t] : m.params()) {
    if (name.rfind("encoder.", 0) != 0) continue;
    for (float g : t.grad()) ASSERT_EQ(g, 0.0f) << name;
  }
  float cb_norm = 0.0f;
  for (float g : m.codebook().grad()) cb_norm += std::abs(g);
  EXPECT_GT(cb_norm, 0.0f);

  m.params().zero_grad();
  ad::backward(l.commitment);
  for (float g : m.codebook().grad()) ASSERT_EQ(g, 0.0f);
}

TEST(Tokenize, LookupReproducesQuantisedCodes) {
  const VqVae m(tiny_config(), 7);
  const Tensor x = random_motion(1, 32, 9, 14);
  const auto tokens = m.tokenize(x);
  ASSERT_EQ(tokens.size(), 4u);
  ad::NoGradGuard g;
  const Quantized q = m.quantize(m.encode(x));
  EXPECT_EQ(tokens, q.indices);
  const Tensor looked = m.lookup(tokens);
  EXPECT_TRUE(std::equal(looked.data().begin(), looked.data().end(), q.codes.data().begin()));
  EXPECT_EQ(m.tokenize(x), tokens);
  for (int t : tokens) EXPECT_TRUE(t >= 0 && t < 12);
}

TEST(Tokenize, ShapePipelinePreservesLength) {
  const VqVae m(tiny_config(), 8);
  for (std::size_t t : {8u, 24u, 32u, 56u, 96u}) {
    const auto tokens = m.tokenize(random_motion(1, t, 9, t));
    EXPECT_EQ(m.detokenize(tokens).length(), t);
  }
}

TEST(Usage, HistogramCountsTokens) {
  const std::vector<int> tokens{0, 2, 2, 5};
  EXPECT_EQ(codebook_usage(tokens, 6), (std::vector<std::size_t>{1, 0, 2, 0, 0, 1}));
  EXPECT_THROW(codebook_usage(std::vector<int>{6}, 6), RangeError);
}

TEST(Training, OverfitsSingleSequence) {
  SynthOptions opt;
  opt.expression_dim = 6;
  opt.audio_dim = 4;
  opt.noise = 0.0;
  const auto sample = synth_dyad(3, 64, 1, opt);
  const std::vector<MotionSequence> train{sample.listener_motion.slice(0, 32)};
  VqVae m(tiny_config(), 9);
  VqTrainConfig cfg;
  cfg.epochs = 1500;
  cfg.batch_size = 1;
  cfg.base_lr = 0.5;
  cfg.warmup = 100;
  AdamState adam;
  const auto report = train_vqvae(m, train, train, cfg, adam);
  double norm = 0.0;
  for (float v : train[0].values()) norm += double(v) * v;
  ad::NoGradGuard g;
  const Tensor x = motion_batch(train);
  const Tensor xh = m.decode(m.quantize(m.encode(x)).codes);
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err += std::pow(double(x.at(i)) - xh.at(i), 2);
  EXPECT_LT(std::sqrt(err), 1e-2 * std::sqrt(norm));
  EXPECT_LT(report.epochs.back().reconstruction, report.epochs.front().reconstruction);
}

TEST(Training, EmptyDatasetThrows) {
  VqVae m(tiny_config(), 10);
  AdamState adam;
  EXPECT_THROW(train_vqvae(m, {}, {}, {}, adam), EmptyInput);
}

TEST(Training, ResumeReproducesNextEpoch) {
  SynthOptions opt;
  opt.expression_dim = 6;
  opt.audio_dim = 4;
  std::vector<MotionSequence> train;
  for (std::uint64_t s = 0; s < 6; ++s) train.push_back(synth_dyad(s, 64, 2, opt).listener_motion.slice(0, 32));
  VqTrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.base_lr = 0.02;
  cfg.warmup = 10;

  VqVae full(tiny_config(), 11);
  AdamState adam_full;
  const auto ref = train_vqvae(full, train, {}, cfg, adam_full);

  VqVae first(tiny_config(), 11);
  AdamState adam_first;
  VqTrainConfig half = cfg;
  half.epochs = 2;
  train_vqvae(first, train, {}, half, adam_first);
  const auto path = std::filesystem::temp_directory_path() / "dyad_vq_resume.ckpt";
  save_checkpoint(path, first.params(), first.config().to_json(), &adam_first, adam_first.step);
  Checkpoint ck = load_checkpoint(path);
  VqVae resumed(VqVaeConfig::from_json(ck.metadata), 99);
  resumed.params().assign_from(ck.params);
  AdamState adam_resumed = *ck.adam;
  VqTrainHooks hooks;
  hooks.start_epoch = 2;
  const auto rest = train_vqvae(resumed, train, {}, cfg, adam_resumed, hooks);
  ASSERT_EQ(rest.epochs.size(), 2u);
  EXPECT_EQ(rest.epochs[0].total, ref.epochs[2].total);
  EXPECT_EQ(rest.epochs[1].total, ref.epochs[3].total);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace dyad
