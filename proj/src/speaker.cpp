// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/speaker.hpp"

#include <algorithm>

#include "dyad/errors.hpp"
#include "dyad/vqvae.hpp"

namespace dyad {

using ad::Tensor;

std::string_view to_string(Fusion fusion) {
  switch (fusion) {
    case Fusion::Cross:
      return "cross";
    case Fusion::Concat:
      return "concat";
    case Fusion::MotionOnly:
      return "motion";
    case Fusion::AudioOnly:
      return "audio";
  }
  return "?";
}

Fusion parse_fusion(std::string_view name) {
  for (Fusion f : {Fusion::Cross, Fusion::Concat, Fusion::MotionOnly, Fusion::AudioOnly}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown fusion '" + std::string(name) + "' (expected cross, concat, motion, audio)");
}

std::size_t SpeakerConfig::context_frames() const { return (tokens + 1) * kTokenWindow; }

nlohmann::json SpeakerConfig::to_json() const {
  return {{"motion_dim", motion_dim}, {"audio_dim", audio_dim}, {"model_dim", model_dim},
          {"heads", heads},           {"layers", layers},       {"ffn_dim", ffn_dim},
          {"tokens", tokens},         {"extra_step", extra_step}, {"fusion", std::string(to_string(fusion))}};
}

SpeakerConfig SpeakerConfig::from_json(const nlohmann::json& j) {
  try {
    SpeakerConfig c;
    c.motion_dim = j.at("motion_dim");
    c.audio_dim = j.at("audio_dim");
    c.model_dim = j.at("model_dim");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.ffn_dim = j.at("ffn_dim");
    c.tokens = j.at("tokens");
    c.extra_step = j.at("extra_step");
    c.fusion = parse_fusion(j.at("fusion").get<std::string>());
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("speaker config: ") + e.what());
  }
}

std::vector<float> pool_audio(const AudioFeatureSequence& audio, std::size_t target_len) {
  const std::size_t r = audio.rate_multiple, da = audio.feature_dim, n = audio.length();
  if (r == 0 || da == 0) throw ShapeError("pool_audio: zero rate or feature dim");
  const std::size_t expected = r * target_len;
  const std::size_t gap = n > expected ? n - expected : expected - n;
  if (gap >= r) {
    throw ShapeError("pool_audio: " + std::to_string(n) + " audio frames for " + std::to_string(target_len) +
                     " motion frames at rate " + std::to_string(r));
  }
  if (n == 0) throw EmptyInput("pool_audio: no audio frames");
  std::vector<float> out(target_len * da);
  for (std::size_t t = 0; t < target_len; ++t) {
    const std::size_t lo = std::min(t * r, n - 1), hi = std::max(lo + 1, std::min((t + 1) * r, n));
    float* dst = out.data() + t * da;
    std::copy_n(audio.values.begin() + static_cast<std::ptrdiff_t>(lo * da), da, dst);
    for (std::size_t u = lo + 1; u < hi; ++u) {
      const float* src = audio.values.data() + u * da;
      for (std::size_t j = 0; j < da; ++j) dst[j] = std::max(dst[j], src[j]);
    }
  }
  return out;
}

SpeakerEncoder SpeakerEncoder::create(ParameterStore& store, const std::string& name, const SpeakerConfig& config,
                                      Rng& rng) {
  if (config.tokens == 0) throw ConfigError("speaker encoder: tokens must be positive");
  SpeakerEncoder e;
  e.config_ = config;
  const std::size_t d = config.model_dim, ctx = config.context_frames();
  e.audio_norm_ = nn::LayerNorm::create(store, name + ".audio_norm", config.audio_dim);
  e.audio_proj_ = nn::Linear::create(store, name + ".audio_proj", config.audio_dim, d, rng);
  e.motion_proj_ = nn::Linear::create(store, name + ".motion_proj", config.motion_dim, d, rng);
  e.audio_pos_ = nn::PositionalEmbedding::create(store, name + ".audio_pos", ctx, d, rng);
  e.motion_pos_ = nn::PositionalEmbedding::create(store, name + ".motion_pos", ctx, d, rng);
  if (config.fusion == Fusion::Concat) e.concat_proj_ = nn::Linear::create(store, name + ".concat_proj", 2 * d, d, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    const std::string block = name + ".block" + std::to_string(i);
    if (config.fusion == Fusion::Cross) {
      e.cross_blocks_.push_back(nn::CrossAttentionBlock::create(store, block, d, config.heads, config.ffn_dim, rng));
    } else {
      e.self_blocks_.push_back(nn::TransformerBlock::create(store, block, d, config.heads, config.ffn_dim, rng));
    }
  }
  e.out_norm_ = nn::LayerNorm::create(store, name + ".norm", d);
  for (std::size_t i = 0; i < 3; ++i) {
    e.down_convs_.push_back(nn::Conv1d::create(store, name + ".down" + std::to_string(i), d, d, 5, 1, 2, rng));
  }
  return e;
}

Tensor SpeakerEncoder::fuse(const Tensor& motion, const Tensor& audio, std::vector<Tensor>* weights) const {
  if (motion.rank() != 3 || audio.rank() != 3 || motion.dim(0) != audio.dim(0) || motion.dim(1) != audio.dim(1)) {
    throw ShapeError("speaker encoder: motion " + ad::to_string(motion.shape()) + " vs audio " +
                     ad::to_string(audio.shape()));
  }
  if (motion.dim(2) != config_.motion_dim || audio.dim(2) != config_.audio_dim) {
    throw ShapeError("speaker encoder: expected " + std::to_string(config_.motion_dim) + " motion and " +
                     std::to_string(config_.audio_dim) + " audio channels, got " + ad::to_string(motion.shape()) +
                     " / " + ad::to_string(audio.shape()));
  }
  const Tensor a = audio_pos_(audio_proj_(audio_norm_(audio)));
  const Tensor m = motion_pos_(motion_proj_(motion));
  Tensor h;
  switch (config_.fusion) {
    case Fusion::Cross:
      h = m;
      for (const auto& block : cross_blocks_) {
        Tensor w;
        h = block(a, h, weights ? &w : nullptr);
        if (weights) weights->push_back(w);
      }
      return out_norm_(h);
    case Fusion::Concat:
      h = concat_proj_(ad::concat({a, m}, 2));
      break;
    case Fusion::MotionOnly:
      h = m;
      break;
    case Fusion::AudioOnly:
      h = a;
      break;
  }
  for (const auto& block : self_blocks_) h = block(h);
  return out_norm_(h);
}

Tensor SpeakerEncoder::operator()(const Tensor& motion, const Tensor& audio) const {
  const std::size_t len = motion.rank() == 3 ? motion.dim(1) : 0;
  if (len == 0 || len % kTokenWindow != 0) {
    throw ShapeError("speaker encoder: length " + std::to_string(len) + " not a positive multiple of " +
                     std::to_string(kTokenWindow));
  }
  Tensor h = fuse(motion, audio);
  for (std::size_t i = 0; i < down_convs_.size(); ++i) {
    h = down_convs_[i](h);
    if (i + 1 < down_convs_.size()) h = ad::gelu(h);
    h = ad::max_pool1d(h, 2, 2);
  }
  const std::size_t steps = h.dim(1), keep = std::min(steps, config_.output_steps());
  return keep == steps ? h : ad::slice(h, 1, steps - keep, keep);
}

}  // namespace dyad
