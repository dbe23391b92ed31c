// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <span>
#include <vector>

#include "dyad/motion.hpp"

namespace dyad {

struct MelOptions {
  std::size_t sample_rate = 16000;
  std::size_t n_fft = 2048;
  std::size_t n_mels = 128;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 -> sample_rate / 2
  double log_floor = 1e-10;
};

// Hop length giving rate_multiple feature frames per motion frame,
// round(sample_rate / (rate_multiple * fps)).
std::size_t mel_hop_length(std::size_t sample_rate, double motion_fps, std::size_t rate_multiple = kAudioRateMultiple);

// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Area-normalised triangular filters, row-major [n_mels, n_fft/2 + 1].
std::vector<double> mel_filterbank(const MelOptions& opts);

// Log-mel spectrogram (dB of power) with a centred, reflect-padded Hann STFT.
// Output frames: 1 + floor(len / hop).
AudioFeatureSequence mel_features(std::span<const float> waveform, double motion_fps = kDefaultFps,
                                  const MelOptions& opts = {});

}  // namespace dyad
