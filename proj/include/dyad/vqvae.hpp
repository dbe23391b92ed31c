// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyad/motion.hpp"
#include "dyad/nn.hpp"
#include "dyad/optim.hpp"
#include "dyad/params.hpp"
#include "dyad/tensor.hpp"

namespace dyad {

// Frames per latent step: three factor-2 max-pools.
inline constexpr std::size_t kTokenWindow = 8;

struct VqVaeConfig {
  std::size_t input_dim = kDefaultExpressionDim + 3;
  std::size_t model_dim = 512;
  std::size_t heads = 8;
  std::size_t layers = 12;
  std::size_t ffn_dim = 2048;
  std::size_t codebook_size = 200;
  std::size_t latent_dim = 256;
  // Encoder and decoder see independent chunks of this many steps, the
  // length the positional tables are sized for.
  std::size_t chunk_tokens = 4;
  float commit_weight = 0.25f;

  nlohmann::json to_json() const;
  static VqVaeConfig from_json(const nlohmann::json& j);
};

// [B, T, C] batch from equal-length sequences.
ad::Tensor motion_batch(std::span<const MotionSequence> seqs);
ad::Tensor motion_batch(std::span<const MotionSequence* const> seqs);

// Row-wise nearest codebook row by squared Euclidean distance; ties go to
// the lowest index. codebook [k, dim], latents [n, dim].
std::vector<int> nearest_codes(std::span<const float> codebook, std::size_t k, std::span<const float> latents,
                               std::size_t dim);

struct Quantized {
  ad::Tensor straight_through;  // latent + sg(codes - latent)
  ad::Tensor codes;             // codebook rows; gradient reaches the codebook only
  std::vector<int> indices;     // [B * tau]
};

struct VqLoss {
  ad::Tensor total;
  ad::Tensor reconstruction;  // mean (x - x_hat)^2
  ad::Tensor codebook;        // mean (sg(latent) - codes)^2
  ad::Tensor commitment;      // mean (sg(codes) - latent)^2
};

VqLoss vq_loss(const ad::Tensor& x, const ad::Tensor& x_hat, const ad::Tensor& latent, const ad::Tensor& codes,
               float commit_weight);

class VqVae {
 public:
  VqVae(const VqVaeConfig& config, std::uint64_t seed);

  const VqVaeConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  ad::Tensor& codebook() { return codebook_; }
  const ad::Tensor& codebook() const { return codebook_; }

  // [B, T, C] -> [B, T / 8, d_z]
  ad::Tensor encode(const ad::Tensor& motion) const;
  Quantized quantize(const ad::Tensor& latent) const;
  // [B, tau, d_z] -> [B, 8 tau, C]
  ad::Tensor decode(const ad::Tensor& codes) const;

  std::vector<int> tokenize(const ad::Tensor& motion) const;
  std::vector<int> tokenize(const MotionSequence& motion) const;
  // tokens hold `batch` rows of equal length.
  ad::Tensor lookup(std::span<const int> tokens, std::size_t batch = 1) const;
  MotionSequence detokenize(std::span<const int> tokens) const;

  // Replaces the codebook with latent rows drawn from encoding `motion`.
  void init_codebook_from_latents(const ad::Tensor& motion, Rng& rng);
  void init_codebook_gaussian(Rng& rng);

  void freeze();
  bool frozen() const { return frozen_; }

 private:
  ad::Tensor encode_chunk(const ad::Tensor& x) const;
  ad::Tensor decode_chunk(const ad::Tensor& z) const;
  ad::Tensor chunked(const ad::Tensor& x, std::size_t frames_per_chunk,
                     ad::Tensor (VqVae::*fn)(const ad::Tensor&) const) const;

  VqVaeConfig config_;
  ParameterStore store_;
  std::vector<nn::Conv1d> enc_convs_;
  nn::PositionalEmbedding enc_pos_;
  std::vector<nn::TransformerBlock> enc_blocks_;
  nn::LayerNorm enc_norm_;
  nn::Linear enc_out_;
  ad::Tensor codebook_;
  nn::Linear dec_in_;
  nn::PositionalEmbedding dec_pos_;
  std::vector<nn::TransformerBlock> dec_blocks_;
  nn::LayerNorm dec_norm_;
  std::vector<nn::Conv1d> dec_convs_;
  nn::Linear dec_out_;
  bool frozen_ = false;
};

// Fraction-free usage counts over [0, K).
std::vector<std::size_t> codebook_usage(std::span<const int> tokens, std::size_t k);

enum class CodebookInit { Latents, Gaussian };

struct VqTrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 32;
  double base_lr = 2.0;
  std::uint64_t warmup = 4000;
  CodebookInit init = CodebookInit::Latents;
  std::uint64_t seed = 0;
};

struct VqEpochStats {
  double total = 0.0;
  double reconstruction = 0.0;
  double codebook = 0.0;
  double commitment = 0.0;
};

struct VqTrainReport {
  std::vector<VqEpochStats> epochs;
  std::vector<std::size_t> usage;  // over the training windows after training
  double heldout_l2 = 0.0;         // mean per-frame distance after quantisation; 0 without held-out data
};

struct VqTrainHooks {
  std::size_t start_epoch = 0;  // > 0 when resuming; skips codebook init
  std::function<void(std::size_t epoch, const VqEpochStats&, const AdamState&)> on_epoch;
};

// Windows must share a length divisible by 8. `adam` carries optimiser
// state across resumes.
VqTrainReport train_vqvae(VqVae& model, const std::vector<MotionSequence>& train,
                          const std::vector<MotionSequence>& heldout, const VqTrainConfig& config, AdamState& adam,
                          const VqTrainHooks& hooks = {});

// Mean per-frame distance between windows and their quantised reconstructions.
double reconstruction_l2(const VqVae& model, const std::vector<MotionSequence>& windows);

}  // namespace dyad
