// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/vqvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyad/errors.hpp"

namespace dyad {

using ad::Tensor;

namespace {

constexpr std::size_t kPoolStages = 3;
constexpr std::size_t kConvKernel = 5;

}  // namespace

nlohmann::json VqVaeConfig::to_json() const {
  return {{"input_dim", input_dim},         {"model_dim", model_dim},   {"heads", heads},
          {"layers", layers},               {"ffn_dim", ffn_dim},       {"codebook_size", codebook_size},
          {"latent_dim", latent_dim},       {"chunk_tokens", chunk_tokens}, {"commit_weight", commit_weight}};
}

VqVaeConfig VqVaeConfig::from_json(const nlohmann::json& j) {
  try {
    VqVaeConfig c;
    c.input_dim = j.at("input_dim");
    c.model_dim = j.at("model_dim");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.ffn_dim = j.at("ffn_dim");
    c.codebook_size = j.at("codebook_size");
    c.latent_dim = j.at("latent_dim");
    c.chunk_tokens = j.at("chunk_tokens");
    c.commit_weight = j.at("commit_weight");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vqvae config: ") + e.what());
  }
}

Tensor motion_batch(std::span<const MotionSequence* const> seqs) {
  if (seqs.empty()) throw EmptyInput("motion_batch: no sequences");
  const std::size_t t = seqs[0]->length(), c = seqs[0]->channels();
  std::vector<float> values;
  values.reserve(seqs.size() * t * c);
  for (const MotionSequence* s : seqs) {
    if (s->length() != t || s->channels() != c) {
      throw ShapeError("motion_batch: sequence " + std::to_string(s->length()) + "x" + std::to_string(s->channels()) +
                       " vs " + std::to_string(t) + "x" + std::to_string(c));
    }
    values.insert(values.end(), s->values().begin(), s->values().end());
  }
  return Tensor::from({seqs.size(), t, c}, std::move(values));
}

Tensor motion_batch(std::span<const MotionSequence> seqs) {
  std::vector<const MotionSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return motion_batch(std::span<const MotionSequence* const>(ptrs));
}

std::vector<int> nearest_codes(std::span<const float> codebook, std::size_t k, std::span<const float> latents,
                               std::size_t dim) {
  if (k == 0 || codebook.empty()) throw ContractError("quantize: empty codebook");
  if (codebook.size() != k * dim || latents.size() % dim != 0) {
    throw ShapeError("quantize: codebook of " + std::to_string(codebook.size()) + " values for " + std::to_string(k) +
                     "x" + std::to_string(dim) + ", latents of " + std::to_string(latents.size()));
  }
  const std::size_t n = latents.size() / dim;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* z = latents.data() + i * dim;
    double best = std::numeric_limits<double>::infinity();
    int best_k = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const float* e = codebook.data() + c * dim;
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = static_cast<double>(z[j]) - static_cast<double>(e[j]);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_k = static_cast<int>(c);
      }
    }
    if (!std::isfinite(best)) throw NumericalError("quantize: non-finite latent or codebook");
    out[i] = best_k;
  }
  return out;
}

VqLoss vq_loss(const Tensor& x, const Tensor& x_hat, const Tensor& latent, const Tensor& codes, float commit_weight) {
  if (commit_weight < 0.0f) throw ContractError("vq_loss: negative commit weight");
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("vq_loss: input " + ad::to_string(x.shape()) + " vs reconstruction " +
                     ad::to_string(x_hat.shape()));
  }
  if (latent.shape() != codes.shape()) {
    throw ShapeError("vq_loss: latent " + ad::to_string(latent.shape()) + " vs codes " + ad::to_string(codes.shape()));
  }
  VqLoss l;
  l.reconstruction = ad::mean(ad::square(ad::sub(x, x_hat)));
  l.codebook = ad::mean(ad::square(ad::sub(ad::stop_gradient(latent), codes)));
  l.commitment = ad::mean(ad::square(ad::sub(ad::stop_gradient(codes), latent)));
  l.total = ad::add(ad::add(l.reconstruction, l.codebook), ad::scale(l.commitment, commit_weight));
  return l;
}

VqVae::VqVae(const VqVaeConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
  if (config.input_dim == 0 || config.model_dim == 0 || config.latent_dim == 0 || config.chunk_tokens == 0) {
    throw ConfigError("vqvae: dimensions must be positive");
  }
  if (config.codebook_size == 0) throw ContractError("vqvae: empty codebook");
  Rng rng = Rng(seed).split("vqvae");
  const std::size_t d = config.model_dim;
  for (std::size_t i = 0; i < kPoolStages; ++i) {
    enc_convs_.push_back(nn::Conv1d::create(store_, "encoder.conv" + std::to_string(i), i == 0 ? config.input_dim : d,
                                            d, kConvKernel, 1, kConvKernel / 2, rng));
  }
  enc_pos_ = nn::PositionalEmbedding::create(store_, "encoder.pos", config.chunk_tokens, d, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    enc_blocks_.push_back(
        nn::TransformerBlock::create(store_, "encoder.block" + std::to_string(i), d, config.heads, config.ffn_dim, rng));
  }
  enc_norm_ = nn::LayerNorm::create(store_, "encoder.norm", d);
  enc_out_ = nn::Linear::create(store_, "encoder.out", d, config.latent_dim, rng);

  std::vector<float> cb(config.codebook_size * config.latent_dim);
  for (float& v : cb) v = static_cast<float>(rng.normal());
  codebook_ = store_.add("codebook", Tensor::from({config.codebook_size, config.latent_dim}, std::move(cb), true));

  dec_in_ = nn::Linear::create(store_, "decoder.in", config.latent_dim, d, rng);
  dec_pos_ = nn::PositionalEmbedding::create(store_, "decoder.pos", config.chunk_tokens, d, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    dec_blocks_.push_back(
        nn::TransformerBlock::create(store_, "decoder.block" + std::to_string(i), d, config.heads, config.ffn_dim, rng));
  }
  dec_norm_ = nn::LayerNorm::create(store_, "decoder.norm", d);
  for (std::size_t i = 0; i < kPoolStages; ++i) {
    dec_convs_.push_back(
        nn::Conv1d::create(store_, "decoder.conv" + std::to_string(i), d, d, kConvKernel, 1, kConvKernel / 2, rng));
  }
  dec_out_ = nn::Linear::create(store_, "decoder.out", d, config.input_dim, rng);
}

Tensor VqVae::encode_chunk(const Tensor& x) const {
  Tensor h = x;
  for (const auto& conv : enc_convs_) h = ad::max_pool1d(ad::gelu(conv(h)), 2, 2);
  h = enc_pos_(h);
  for (const auto& block : enc_blocks_) h = block(h);
  return enc_out_(enc_norm_(h));
}

Tensor VqVae::decode_chunk(const Tensor& z) const {
  Tensor h = dec_pos_(dec_in_(z));
  for (const auto& block : dec_blocks_) h = block(h);
  h = dec_norm_(h);
  for (const auto& conv : dec_convs_) h = ad::gelu(conv(ad::upsample_repeat(h, 2)));
  return dec_out_(h);
}

// Splits axis 1 into independent chunks folded into the batch axis.
Tensor VqVae::chunked(const Tensor& x, std::size_t chunk, Tensor (VqVae::*fn)(const Tensor&) const) const {
  const std::size_t b = x.dim(0), len = x.dim(1), c = x.dim(2);
  if (len <= chunk) return (this->*fn)(x);
  const std::size_t n = len / chunk, rem = len % chunk;
  Tensor main = ad::reshape(ad::slice(x, 1, 0, n * chunk), {b * n, chunk, c});
  Tensor y = (this->*fn)(main);
  y = ad::reshape(y, {b, n * y.dim(1), y.dim(2)});
  if (rem == 0) return y;
  return ad::concat({y, (this->*fn)(ad::slice(x, 1, n * chunk, rem))}, 1);
}

Tensor VqVae::encode(const Tensor& motion) const {
  if (motion.rank() != 3 || motion.dim(2) != config_.input_dim) {
    throw ShapeError("encode: expected [B, T, " + std::to_string(config_.input_dim) + "], got " +
                     ad::to_string(motion.shape()));
  }
  if (motion.dim(1) == 0 || motion.dim(1) % kTokenWindow != 0) {
    throw ShapeError("encode: length " + std::to_string(motion.dim(1)) + " not a positive multiple of " +
                     std::to_string(kTokenWindow));
  }
  return chunked(motion, config_.chunk_tokens * kTokenWindow, &VqVae::encode_chunk);
}

Tensor VqVae::decode(const Tensor& codes) const {
  if (codes.rank() != 3 || codes.dim(2) != config_.latent_dim) {
    throw ShapeError("decode: expected [B, tau, " + std::to_string(config_.latent_dim) + "], got " +
                     ad::to_string(codes.shape()));
  }
  if (codes.dim(1) == 0) throw ShapeError("decode: zero latent steps");
  return chunked(codes, config_.chunk_tokens, &VqVae::decode_chunk);
}

Quantized VqVae::quantize(const Tensor& latent) const {
  if (latent.rank() != 3 || latent.dim(2) != config_.latent_dim) {
    throw ShapeError("quantize: expected [B, tau, " + std::to_string(config_.latent_dim) + "], got " +
                     ad::to_string(latent.shape()));
  }
  Quantized q;
  q.indices = nearest_codes(codebook_.data(), config_.codebook_size, latent.data(), config_.latent_dim);
  q.codes = ad::embedding(codebook_, q.indices, {latent.dim(0), latent.dim(1)});
  q.straight_through = ad::add(latent, ad::stop_gradient(ad::sub(q.codes, latent)));
  return q;
}

std::vector<int> VqVae::tokenize(const Tensor& motion) const {
  ad::NoGradGuard guard;
  const Tensor latent = encode(motion);
  return nearest_codes(codebook_.data(), config_.codebook_size, latent.data(), config_.latent_dim);
}

std::vector<int> VqVae::tokenize(const MotionSequence& motion) const {
  if (motion.channels() != config_.input_dim) {
    throw ShapeError("tokenize: sequence has " + std::to_string(motion.channels()) + " channels, model expects " +
                     std::to_string(config_.input_dim));
  }
  return tokenize(Tensor::from({1, motion.length(), motion.channels()}, motion.values()));
}

Tensor VqVae::lookup(std::span<const int> tokens, std::size_t batch) const {
  if (batch == 0 || tokens.size() % batch != 0) {
    throw ShapeError("lookup: " + std::to_string(tokens.size()) + " tokens in " + std::to_string(batch) + " rows");
  }
  return ad::embedding(codebook_, tokens, {batch, tokens.size() / batch});
}

MotionSequence VqVae::detokenize(std::span<const int> tokens) const {
  ad::NoGradGuard guard;
  const Tensor out = decode(lookup(tokens));
  MotionSequence seq(config_.input_dim - 3, out.dim(1));
  std::copy(out.data().begin(), out.data().end(), seq.values().begin());
  return seq;
}

void VqVae::init_codebook_from_latents(const Tensor& motion, Rng& rng) {
  std::vector<float> latents;
  {
    ad::NoGradGuard guard;
    const Tensor z = encode(motion);
    latents.assign(z.data().begin(), z.data().end());
  }
  const std::size_t dz = config_.latent_dim, n = latents.size() / dz;
  if (n == 0) throw EmptyInput("codebook init: no latents");
  double var = 0.0;
  for (float v : latents) var += static_cast<double>(v) * v;
  const double jitter = 1e-2 * std::sqrt(var / static_cast<double>(latents.size()));
  auto cb = codebook_.data();
  for (std::size_t k = 0; k < config_.codebook_size; ++k) {
    const std::size_t src = rng.below(n);
    for (std::size_t j = 0; j < dz; ++j) {
      cb[k * dz + j] = latents[src * dz + j] + static_cast<float>(jitter * rng.normal());
    }
  }
}

void VqVae::init_codebook_gaussian(Rng& rng) {
  for (float& v : codebook_.data()) v = static_cast<float>(rng.normal());
}

void VqVae::freeze() {
  store_.set_trainable(false);
  frozen_ = true;
}

std::vector<std::size_t> codebook_usage(std::span<const int> tokens, std::size_t k) {
  std::vector<std::size_t> hist(k, 0);
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw RangeError("token " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
    }
    ++hist[static_cast<std::size_t>(t)];
  }
  return hist;
}

double reconstruction_l2(const VqVae& model, const std::vector<MotionSequence>& windows) {
  if (windows.empty()) throw EmptyInput("reconstruction_l2: no windows");
  ad::NoGradGuard guard;
  const Tensor x = motion_batch(windows);
  const Tensor x_hat = model.decode(model.quantize(model.encode(x)).codes);
  const std::size_t c = x.dim(2), frames = x.dim(0) * x.dim(1);
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    double d = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double diff = static_cast<double>(x.data()[f * c + j]) - x_hat.data()[f * c + j];
      d += diff * diff;
    }
    total += std::sqrt(d);
  }
  return total / static_cast<double>(frames);
}

VqTrainReport train_vqvae(VqVae& model, const std::vector<MotionSequence>& train,
                          const std::vector<MotionSequence>& heldout, const VqTrainConfig& config, AdamState& adam,
                          const VqTrainHooks& hooks) {
  if (train.empty()) throw EmptyInput("train_vqvae: empty dataset");
  if (model.frozen()) throw ContractError("train_vqvae: model is frozen");
  if (config.batch_size == 0) throw ConfigError("train_vqvae: batch_size must be positive");
  const Rng root(config.seed);
  if (hooks.start_epoch == 0) {
    Rng init_rng = root.split("codebook-init");
    if (config.init == CodebookInit::Latents) {
      model.init_codebook_from_latents(motion_batch(train), init_rng);
    } else {
      model.init_codebook_gaussian(init_rng);
    }
  }

  VqTrainReport report;
  const std::size_t n = train.size();
  const float commit = model.config().commit_weight;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = hooks.start_epoch; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = root.split("shuffle").split(epoch);
    std::shuffle(order.begin(), order.end(), shuffle);
    VqEpochStats stats;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      std::vector<const MotionSequence*> batch;
      for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) batch.push_back(&train[order[i]]);
      const Tensor x = motion_batch(std::span<const MotionSequence* const>(batch));
      const Tensor latent = model.encode(x);
      const Quantized q = model.quantize(latent);
      const Tensor x_hat = model.decode(q.straight_through);
      const VqLoss loss = vq_loss(x, x_hat, latent, q.codes, commit);
      if (!std::isfinite(loss.total.item())) {
        throw NumericalError("train_vqvae: non-finite loss at epoch " + std::to_string(epoch));
      }
      model.params().zero_grad();
      ad::backward(loss.total);
      adam_step(model.params(), adam,
                noam_lr(adam.step + 1, config.base_lr, config.warmup, model.config().model_dim));
      stats.total += loss.total.item();
      stats.reconstruction += loss.reconstruction.item();
      stats.codebook += loss.codebook.item();
      stats.commitment += loss.commitment.item();
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    stats.total *= inv;
    stats.reconstruction *= inv;
    stats.codebook *= inv;
    stats.commitment *= inv;
    report.epochs.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(epoch, stats, adam);
  }

  std::vector<int> tokens = model.tokenize(motion_batch(train));
  report.usage = codebook_usage(tokens, model.config().codebook_size);
  if (!heldout.empty()) report.heldout_l2 = reconstruction_l2(model, heldout);
  return report;
}

}  // namespace dyad
