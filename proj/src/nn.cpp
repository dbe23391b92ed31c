// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/nn.hpp"

#include <cmath>

#include "dyad/errors.hpp"

namespace dyad::nn {

namespace {

Tensor gaussian(ad::Shape shape, double stddev, Rng& rng) {
  std::vector<float> values(ad::numel(shape));
  for (float& v : values) v = static_cast<float>(rng.normal() * stddev);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = store.add(name + ".weight", gaussian({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  if (with_bias) l.bias = store.add(name + ".bias", Tensor::zeros({out}, true));
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ad::matmul(x, weight);
  return bias.defined() ? ad::add(y, bias) : y;
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, std::size_t dim) {
  LayerNorm ln;
  ln.gamma = store.add(name + ".gamma", Tensor::full({dim}, 1.0f, true));
  ln.beta = store.add(name + ".beta", Tensor::zeros({dim}, true));
  return ln;
}

Conv1d Conv1d::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng) {
  Conv1d c;
  c.kernel = kernel;
  c.stride = stride;
  c.padding = padding;
  c.weight = store.add(name + ".weight",
                       gaussian({kernel * in, out}, 1.0 / std::sqrt(static_cast<double>(kernel * in)), rng));
  c.bias = store.add(name + ".bias", Tensor::zeros({out}, true));
  return c;
}

PositionalEmbedding PositionalEmbedding::create(ParameterStore& store, const std::string& name,
                                                std::size_t max_len, std::size_t dim, Rng& rng) {
  PositionalEmbedding p;
  p.table = store.add(name + ".table", gaussian({max_len, dim}, 0.02, rng));
  return p;
}

Tensor PositionalEmbedding::operator()(const Tensor& x) const {
  const std::size_t len = x.dim(1);
  if (len > table.dim(0)) {
    throw ShapeError("positional embedding covers " + std::to_string(table.dim(0)) + " steps, got " +
                     std::to_string(len));
  }
  return ad::add(x, ad::slice(table, 0, 0, len));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  MultiHeadAttention a;
  a.heads = heads;
  a.q = Linear::create(store, name + ".q", dim, dim, rng);
  a.k = Linear::create(store, name + ".k", dim, dim, rng);
  a.v = Linear::create(store, name + ".v", dim, dim, rng);
  a.o = Linear::create(store, name + ".o", dim, dim, rng);
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& query_src, const Tensor& kv_src, const KeyMask* mask,
                                      Tensor* weights_out) const {
  const std::size_t batch = query_src.dim(0), lq = query_src.dim(1), dim = query_src.dim(2);
  const std::size_t lk = kv_src.dim(1), dh = dim / heads;
  if (kv_src.dim(0) != batch || kv_src.dim(2) != dim) {
    throw ShapeError("attention: query " + ad::to_string(query_src.shape()) + " vs key/value " +
                     ad::to_string(kv_src.shape()));
  }
  auto split = [&](const Tensor& t, std::size_t len) {
    return ad::reshape(ad::permute(ad::reshape(t, {batch, len, heads, dh}), {0, 2, 1, 3}), {batch * heads, len, dh});
  };
  Tensor qh = split(q(query_src), lq);
  Tensor kh = split(k(kv_src), lk);
  Tensor vh = split(v(kv_src), lk);
  Tensor scores = ad::scale(ad::bmm(qh, ad::transpose(kh)), 1.0f / std::sqrt(static_cast<float>(dh)));
  if (mask) {
    if (mask->size() != batch * lk) {
      throw ShapeError("attention: key mask of " + std::to_string(mask->size()) + " for " +
                       std::to_string(batch) + "x" + std::to_string(lk) + " keys");
    }
    std::vector<float> bias(batch * heads * lq * lk, 0.0f);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < lk; ++j) {
        if ((*mask)[b * lk + j]) continue;
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < lq; ++i) bias[((b * heads + h) * lq + i) * lk + j] = -1e9f;
        }
      }
    }
    scores = ad::add(scores, Tensor::from({batch * heads, lq, lk}, std::move(bias)));
  }
  Tensor weights = ad::softmax(scores);
  if (weights_out) *weights_out = weights;
  Tensor ctx = ad::bmm(weights, vh);
  ctx = ad::reshape(ad::permute(ad::reshape(ctx, {batch, heads, lq, dh}), {0, 2, 1, 3}), {batch, lq, dim});
  return o(ctx);
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                std::size_t hidden, Rng& rng) {
  FeedForward f;
  f.up = Linear::create(store, name + ".up", dim, hidden, rng);
  f.down = Linear::create(store, name + ".down", hidden, dim, rng);
  return f;
}

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                          std::size_t heads, std::size_t ffn, Rng& rng) {
  TransformerBlock b;
  b.ln1 = LayerNorm::create(store, name + ".ln1", dim);
  b.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  b.ln2 = LayerNorm::create(store, name + ".ln2", dim);
  b.ff = FeedForward::create(store, name + ".ff", dim, ffn, rng);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, const KeyMask* mask) const {
  Tensor h = ln1(x);
  Tensor y = ad::add(x, attn(h, h, mask));
  return ad::add(y, ff(ln2(y)));
}

CrossAttentionBlock CrossAttentionBlock::create(ParameterStore& store, const std::string& name,
                                                std::size_t dim, std::size_t heads, std::size_t ffn, Rng& rng) {
  CrossAttentionBlock b;
  b.ln_query = LayerNorm::create(store, name + ".ln_query", dim);
  b.ln_kv = LayerNorm::create(store, name + ".ln_kv", dim);
  b.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  b.ln_ff = LayerNorm::create(store, name + ".ln_ff", dim);
  b.ff = FeedForward::create(store, name + ".ff", dim, ffn, rng);
  return b;
}

Tensor CrossAttentionBlock::operator()(const Tensor& query_stream, const Tensor& kv_stream,
                                       Tensor* weights_out) const {
  Tensor y = ad::add(kv_stream, attn(ln_query(query_stream), ln_kv(kv_stream), nullptr, weights_out));
  return ad::add(y, ff(ln_ff(y)));
}

}  // namespace dyad::nn
