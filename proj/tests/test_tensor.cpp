// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include <gtest/gtest.h>

#include <cmath>

#include "dyad/errors.hpp"
#include "dyad/nn.hpp"
#include "dyad/tensor.hpp"
#include "gradcheck.hpp"

namespace dyad {
namespace {

using ad::Tensor;
using testing::grad_check;
using testing::random_tensor;

TEST(Tensor, StopGradientBlocksFlow) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  ad::backward(ad::sum(ad::stop_gradient(x)));
  for (float g : x.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Tensor, StopGradientPreservesValues) {
  Rng rng(4);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor a = ad::softmax(ad::gelu(x));
  Tensor b = ad::softmax(ad::gelu(ad::stop_gradient(x)));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Tensor, SoftmaxOfEqualLogitsIsUniform) {
  Tensor p = ad::softmax(Tensor::from({2}, {0, 0}));
  EXPECT_FLOAT_EQ(p.at(0), 0.5f);
  EXPECT_FLOAT_EQ(p.at(1), 0.5f);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(11);
  Tensor p = ad::softmax(random_tensor({7, 13}, rng, 5.0));
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 13; ++j) s += p.at(r * 13 + j);
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  Rng rng(3);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor c = ad::matmul(a, b);
  ASSERT_EQ(c.shape(), (ad::Shape{2, 4}));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 3; ++k) ref += double(a.at(i * 3 + k)) * b.at(k * 4 + j);
      EXPECT_NEAR(c.at(i * 4 + j), ref, 1e-6);
    }
  }
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2x3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(4x2)"), std::string::npos);
  }
}

TEST(Backward, SumOfSquares) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  ad::backward(ad::sum(ad::mul(x, x)));
  EXPECT_FLOAT_EQ(x.grad()[0], 2.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 4.0f);
  EXPECT_FLOAT_EQ(x.grad()[2], 6.0f);
}

TEST(Backward, OneFactorDetached) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  ad::backward(ad::sum(ad::mul(x, ad::stop_gradient(x))));
  EXPECT_FLOAT_EQ(x.grad()[0], 1.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 2.0f);
  EXPECT_FLOAT_EQ(x.grad()[2], 3.0f);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor loss = ad::sum(ad::square(x));
  ad::backward(loss);
  ad::backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 8.0f);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  EXPECT_THROW(ad::backward(ad::square(x)), ContractError);
}

TEST(Backward, RandomMlpMatchesFiniteDifferences) {
  // Five parameter tensors: two weights, two biases, one output weight.
  Rng rng(21);
  std::vector<Tensor> params = {random_tensor({3, 4}, rng, 0.5), random_tensor({4}, rng, 0.1),
                                random_tensor({4, 4}, rng, 0.5), random_tensor({4}, rng, 0.1),
                                random_tensor({4, 1}, rng, 0.5)};
  const Tensor x = random_tensor({5, 3}, rng).detach();
  auto mlp = [&](const std::vector<Tensor>& p) {
    Tensor h = ad::gelu(ad::add(ad::matmul(x, p[0]), p[1]));
    h = ad::relu(ad::add(ad::matmul(h, p[2]), p[3]));
    return ad::matmul(h, p[4]);
  };
  EXPECT_LT(grad_check(mlp, params, rng).relative_error, 1e-3);
}

TEST(Backward, ConvPoolUpsampleChain) {
  Rng rng(5);
  std::vector<Tensor> in = {random_tensor({2, 8, 3}, rng), random_tensor({15, 4}, rng, 0.3),
                            random_tensor({4}, rng, 0.1)};
  auto f = [](const std::vector<Tensor>& p) {
    Tensor y = ad::conv1d(p[0], p[1], p[2], 5, 1, 2);
    return ad::upsample_repeat(ad::max_pool1d(y, 2, 2), 2);
  };
  EXPECT_LT(grad_check(f, in, rng).relative_error, 1e-3);
}

TEST(Backward, StopGradientZeroesGradientThroughComposite) {
  Rng rng(8);
  Tensor x = random_tensor({3, 4}, rng);
  Tensor w = random_tensor({4, 2}, rng);
  ad::backward(ad::sum(ad::matmul(ad::stop_gradient(ad::gelu(x)), w)));
  EXPECT_FALSE(x.has_grad());
  EXPECT_TRUE(w.has_grad());
}

TEST(Tensor, ConcatAndSliceRoundTrip) {
  Rng rng(9);
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 5, 4}, rng);
  Tensor c = ad::concat({a, b}, 1);
  ASSERT_EQ(c.shape(), (ad::Shape{2, 8, 4}));
  Tensor back = ad::slice(c, 1, 3, 5);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(back.at(i), b.at(i));
}

TEST(Tensor, EmbeddingRejectsOutOfRangeIndex) {
  Tensor table = Tensor::zeros({4, 2});
  std::vector<int> idx{0, 4};
  EXPECT_THROW(ad::embedding(table, idx, {2}), RangeError);
}

TEST(Tensor, CrossEntropyOfUniformLogitsIsLogK) {
  Tensor logits = Tensor::zeros({3, 200});
  std::vector<int> t{0, 17, 199};
  EXPECT_NEAR(ad::cross_entropy(logits, t).item(), std::log(200.0), 1e-5);
}

TEST(Tensor, NoGradGuardSkipsGraph) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  ad::NoGradGuard guard;
  Tensor y = ad::square(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Attention, MaskedKeysReceiveZeroWeight) {
  Rng rng(2);
  ParameterStore store;
  auto mha = nn::MultiHeadAttention::create(store, "a", 8, 2, rng);
  Tensor x = random_tensor({1, 4, 8}, rng);
  nn::KeyMask mask{1, 0, 1, 0};
  Tensor weights;
  mha(x, x, &mask, &weights);
  for (std::size_t row = 0; row < 2 * 4; ++row) {
    EXPECT_EQ(weights.at(row * 4 + 1), 0.0f);
    EXPECT_EQ(weights.at(row * 4 + 3), 0.0f);
    EXPECT_NEAR(weights.at(row * 4 + 0) + weights.at(row * 4 + 2), 1.0, 1e-6);
  }
}

}  // namespace
}  // namespace dyad
