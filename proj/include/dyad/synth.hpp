// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <optional>

#include "dyad/motion.hpp"

namespace dyad {

inline constexpr std::size_t kMinSynthLength = 64;
inline constexpr int kMinSynthLag = 12;
inline constexpr int kMaxSynthLag = 22;

struct SynthOptions {
  std::size_t expression_dim = kDefaultExpressionDim;
  std::size_t audio_dim = kDefaultAudioDim;
  double fps = kDefaultFps;
  double noise = 0.02;
  // Fixed listener lag / mode instead of per-sample draws.
  std::optional<int> lag;
  std::optional<std::size_t> mode;
  // Draw the speaker from this seed instead of the sample seed, so many
  // listener draws can respond to one fixed speaker.
  std::optional<std::uint64_t> speaker_seed;
  // Audio additionally carries a prosody source that the motion stream does
  // not, and the listener reacts to it; motion carries a source audio lacks.
  bool audio_informative = false;
};

// Ground truth behind a synthetic sample.
struct SynthTruth {
  int lag = 0;
  std::size_t mode = 0;
  std::size_t smoothing_radius = 0;
};

// Deterministic in `seed`. Speaker motion is a fixed linear image of three
// smooth latent sources (sums of low-frequency sinusoids); expression
// coefficient 0 carries source 0 verbatim and pitch carries source 1.
// Audio features are a fixed linear image of the speaker motion sampled at
// rate_multiple x the motion rate. The listener applies one of `mode_count`
// centred moving-average-plus-gain responses to the speaker sources delayed
// by `lag` frames. Both motion streams are rest-pose normalised.
DyadSample synth_dyad(std::uint64_t seed, std::size_t length, std::size_t mode_count,
                      const SynthOptions& options = {}, SynthTruth* truth = nullptr);

}  // namespace dyad
