// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyad/dataset.hpp"
#include "dyad/nn.hpp"
#include "dyad/optim.hpp"
#include "dyad/speaker.hpp"
#include "dyad/vqvae.hpp"

namespace dyad {

struct PredictorConfig {
  std::size_t codebook_size = 200;
  std::size_t model_dim = 200;
  std::size_t heads = 10;
  std::size_t layers = 5;
  std::size_t ffn_dim = 800;
  std::size_t tokens = 4;   // past listener tokens seen per prediction
  std::size_t outputs = 4;  // supervised output positions; the first is the next token
  float aux_weight = 1.0f;

  nlohmann::json to_json() const;
  static PredictorConfig from_json(const nlohmann::json& j);
};

// Speaker encoder and token predictor, trained jointly in one store.
class ListenerModel {
 public:
  ListenerModel(const SpeakerConfig& speaker, const PredictorConfig& predictor, std::uint64_t seed);

  const SpeakerConfig& speaker_config() const { return speaker_.config(); }
  const PredictorConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const SpeakerEncoder& speaker_encoder() const { return speaker_; }

  nlohmann::json to_json() const;
  static ListenerModel from_json(const nlohmann::json& j, std::uint64_t seed = 0);

  // speaker_motion [B, L, C_m], speaker_audio [B, L, d_a], past [B * tokens]
  // and visible [B * tokens] (1 = seen). Hidden tokens enter as zero
  // vectors and are never attended. Returns logits [B, outputs, K].
  ad::Tensor logits(const ad::Tensor& speaker_motion, const ad::Tensor& speaker_audio, std::span<const int> past,
                    std::span<const std::uint8_t> visible) const;

 private:
  PredictorConfig config_;
  ParameterStore store_;
  SpeakerEncoder speaker_;
  nn::Linear speaker_in_;
  ad::Tensor token_table_;
  ad::Tensor segment_table_;  // [2, d]: speaker, listener
  nn::PositionalEmbedding pos_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  nn::Linear head_;
};

// Standardised speaker streams at motion rate.
struct SpeakerStreams {
  MotionSequence motion;
  std::vector<float> audio;  // [T, d_a], pooled
  std::size_t audio_dim = 0;

  std::size_t length() const { return motion.length(); }
};

SpeakerStreams speaker_streams(const DyadSample& sample);

struct TokenizedDyad {
  SpeakerStreams speaker;
  std::vector<int> listener_tokens;  // one per 8 frames, aligned at frame 0
};

// Tokenises the whole listener stream; trailing frames beyond a multiple of
// 8 are dropped.
TokenizedDyad tokenize_dyad(const VqVae& vqvae, const DyadSample& sample);

// Speaker context for predicting token `step`: frames
// [(step - tokens) * 8, (step + 1) * 8), with frames before 0 repeating
// frame 0. Needs (step + 1) * 8 <= length.
void speaker_window(const SpeakerStreams& speaker, std::size_t step, std::size_t tokens, std::vector<float>& motion,
                    std::vector<float>& audio);

struct SpeakerDropout {
  bool audio = false;
  bool motion = false;
};

// Next-token distribution (softmax of output position 0, in double).
std::vector<double> predict_dist(const ListenerModel& model, const SpeakerStreams& speaker, std::size_t step,
                                 std::span<const int> past, std::span<const std::uint8_t> visible,
                                 SpeakerDropout dropout = {});

// Tokens in the smallest probability-sorted prefix with mass >= p; equal
// probabilities keep index order.
std::vector<std::size_t> nucleus_set(std::span<const double> dist, double p);
std::size_t nucleus_sample(std::span<const double> dist, double p, Rng& rng);

struct PredictorTrainConfig {
  std::size_t epochs = 1000;
  std::size_t batch_size = 32;
  double base_lr = 0.01;
  std::uint64_t warmup = 4000;
  double mask_prob = 0.5;
  std::uint64_t seed = 0;
};

struct PredictorEpochStats {
  double loss = 0.0;
  double next_token_ce = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;  // NaN-free: 0 when there is no held-out data
};

struct PredictorTrainReport {
  double initial_ce = 0.0;  // next-token cross-entropy on the training set before any update
  std::vector<PredictorEpochStats> epochs;
};

struct PredictorTrainHooks {
  std::size_t start_epoch = 0;
  std::function<void(std::size_t epoch, const PredictorEpochStats&, const AdamState&)> on_epoch;
};

// Teacher-forced training over every (dyad, token) position. Samples must
// be standardised. The VQ-VAE must be frozen.
PredictorTrainReport train_predictor(ListenerModel& model, const VqVae& vqvae, const std::vector<DyadSample>& train,
                                     const std::vector<DyadSample>& heldout, const PredictorTrainConfig& config,
                                     AdamState& adam, const PredictorTrainHooks& hooks = {});

// Top-1 next-token accuracy with the natural history (no random masking).
double next_token_accuracy(const ListenerModel& model, const std::vector<TokenizedDyad>& dyads,
                           SpeakerDropout dropout = {});
double next_token_cross_entropy(const ListenerModel& model, const std::vector<TokenizedDyad>& dyads);

// Autoregressive generation from an empty history: `steps` tokens sampled
// with nucleus p, then decoded to steps * 8 standardised frames. The
// speaker must cover steps * 8 frames.
std::vector<int> rollout_tokens(const ListenerModel& model, const SpeakerStreams& speaker, std::size_t steps,
                                double p, Rng& rng);
MotionSequence rollout(const ListenerModel& model, const VqVae& vqvae, const SpeakerStreams& speaker,
                       std::size_t steps, double p, Rng& rng);

// curve[x - 1] = mean over speakers of min_{i <= x} L2(rollout_i, truth),
// for x = 1..n_samples. Truth sequences are compared over the rollout span.
std::vector<double> multi_sample_min_l2(const ListenerModel& model, const VqVae& vqvae,
                                        const std::vector<SpeakerStreams>& speakers,
                                        const std::vector<MotionSequence>& truth, std::size_t steps,
                                        std::size_t n_samples, double p, std::uint64_t seed);

}  // namespace dyad
