// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyad/motion.hpp"
#include "dyad/nn.hpp"

namespace dyad {

// How the speaker's audio and motion streams are combined.
//   Cross: audio queries against the running motion stream.
//   Concat: channel concatenation followed by self-attention.
//   MotionOnly / AudioOnly: self-attention over one modality.
enum class Fusion { Cross, Concat, MotionOnly, AudioOnly };

std::string_view to_string(Fusion fusion);
Fusion parse_fusion(std::string_view name);

struct SpeakerConfig {
  std::size_t motion_dim = kDefaultExpressionDim + 3;
  std::size_t audio_dim = kDefaultAudioDim;
  std::size_t model_dim = 1024;
  std::size_t heads = 8;
  std::size_t layers = 12;
  std::size_t ffn_dim = 4096;
  std::size_t tokens = 4;      // listener steps the encoding is matched to
  bool extra_step = false;     // keep tokens + 1 steps
  Fusion fusion = Fusion::Cross;

  // Past listener span plus one step of look-ahead, in frames.
  std::size_t context_frames() const;
  std::size_t output_steps() const { return tokens + (extra_step ? 1 : 0); }

  nlohmann::json to_json() const;
  static SpeakerConfig from_json(const nlohmann::json& j);
};

// Non-overlapping max over blocks of `rate_multiple` audio frames, giving
// one row per motion frame ([target_len, d_a], row-major). A short final
// block uses the frames it has; a missing one repeats the last row. More
// than rate_multiple - 1 frames of mismatch is a ShapeError.
std::vector<float> pool_audio(const AudioFeatureSequence& audio, std::size_t target_len);

class SpeakerEncoder {
 public:
  static SpeakerEncoder create(ParameterStore& store, const std::string& name, const SpeakerConfig& config, Rng& rng);

  const SpeakerConfig& config() const { return config_; }

  // motion [B, L, C_m], audio [B, L, d_a] -> [B, L, d]. Attention weights
  // of every block are appended to `weights` when given.
  ad::Tensor fuse(const ad::Tensor& motion, const ad::Tensor& audio, std::vector<ad::Tensor>* weights = nullptr) const;

  // Fused stream downsampled by 8 in time; keeps the last output_steps().
  ad::Tensor operator()(const ad::Tensor& motion, const ad::Tensor& audio) const;

  // Exposed for tests that pin attention behaviour.
  std::vector<nn::CrossAttentionBlock>& cross_blocks() { return cross_blocks_; }

 private:
  SpeakerConfig config_;
  nn::LayerNorm audio_norm_;
  nn::Linear audio_proj_, motion_proj_, concat_proj_;
  nn::PositionalEmbedding audio_pos_, motion_pos_;
  std::vector<nn::CrossAttentionBlock> cross_blocks_;
  std::vector<nn::TransformerBlock> self_blocks_;
  nn::LayerNorm out_norm_;
  std::vector<nn::Conv1d> down_convs_;
};

}  // namespace dyad
