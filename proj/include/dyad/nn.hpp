// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyad/params.hpp"
#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace dyad::nn {

using ad::Tensor;

// Layers hold aliases of tensors registered in a ParameterStore under a
// dotted prefix, so checkpoints and optimisers only deal with the store.

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return ad::layer_norm(x, gamma, beta); }
};

struct Conv1d {
  Tensor weight;  // [kernel * in, out]
  Tensor bias;
  std::size_t kernel = 5, stride = 1, padding = 2;

  static Conv1d create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);
  Tensor operator()(const Tensor& x) const {
    return ad::conv1d(x, weight, bias, kernel, stride, padding);
  }
};

// Learned positional table [max_len, dim]; adds the first L rows.
struct PositionalEmbedding {
  Tensor table;

  static PositionalEmbedding create(ParameterStore& store, const std::string& name, std::size_t max_len,
                                    std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& x) const;  // x [B, L, D]
};

// Per-(batch, key) visibility; 1 = attend, 0 = suppressed.
using KeyMask = std::vector<std::uint8_t>;

struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, std::size_t dim,
                                   std::size_t heads, Rng& rng);

  // query_src [B, Lq, D], kv_src [B, Lk, D]. `weights_out`, when given,
  // receives the post-softmax attention [B*heads, Lq, Lk].
  Tensor operator()(const Tensor& query_src, const Tensor& kv_src, const KeyMask* mask = nullptr,
                    Tensor* weights_out = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                            Rng& rng);
  Tensor operator()(const Tensor& x) const { return down(ad::gelu(up(x))); }
};

// Pre-norm self-attention block.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ff;

  static TransformerBlock create(ParameterStore& store, const std::string& name, std::size_t dim,
                                 std::size_t heads, std::size_t ffn, Rng& rng);
  Tensor operator()(const Tensor& x, const KeyMask* mask = nullptr) const;
};

// Queries from a fixed conditioning stream, keys/values from the running
// stream, which also carries the residual.
struct CrossAttentionBlock {
  LayerNorm ln_query, ln_kv, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  static CrossAttentionBlock create(ParameterStore& store, const std::string& name, std::size_t dim,
                                    std::size_t heads, std::size_t ffn, Rng& rng);
  Tensor operator()(const Tensor& query_stream, const Tensor& kv_stream, Tensor* weights_out = nullptr) const;
};

}  // namespace dyad::nn
