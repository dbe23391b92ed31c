// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/mel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "dyad/errors.hpp"

namespace dyad {

namespace {

constexpr double kMinLogHz = 1000.0;
constexpr double kHzPerMel = 200.0 / 3.0;
constexpr double kMinLogMel = kMinLogHz / kHzPerMel;
const double kLogStep = std::log(6.4) / 27.0;

}  // namespace

std::size_t mel_hop_length(std::size_t sample_rate, double motion_fps, std::size_t rate_multiple) {
  if (motion_fps <= 0.0 || rate_multiple == 0) throw ContractError("mel_hop_length: fps and rate must be positive");
  return static_cast<std::size_t>(std::lround(static_cast<double>(sample_rate) / (motion_fps * rate_multiple)));
}

double hz_to_mel(double hz) {
  if (hz < kMinLogHz) return hz / kHzPerMel;
  return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMinLogMel) return mel * kHzPerMel;
  return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

std::vector<double> mel_filterbank(const MelOptions& opts) {
  const std::size_t bins = opts.n_fft / 2 + 1;
  const double fmax = opts.fmax > 0.0 ? opts.fmax : opts.sample_rate / 2.0;
  const double lo = hz_to_mel(opts.fmin), hi = hz_to_mel(fmax);
  std::vector<double> edges(opts.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(opts.n_mels + 1));
  }
  std::vector<double> fb(opts.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < opts.n_mels; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    const double norm = 2.0 / (right - left);
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * opts.sample_rate / static_cast<double>(opts.n_fft);
      const double up = (f - left) / (centre - left);
      const double down = (right - f) / (right - centre);
      fb[m * bins + k] = norm * std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

AudioFeatureSequence mel_features(std::span<const float> waveform, double motion_fps, const MelOptions& opts) {
  const std::size_t n_fft = opts.n_fft;
  if (waveform.size() < n_fft) {
    throw EmptyInput("mel_features: " + std::to_string(waveform.size()) + " samples is shorter than one " +
                     std::to_string(n_fft) + "-sample window");
  }
  const std::size_t hop = mel_hop_length(opts.sample_rate, motion_fps);
  const std::size_t pad = n_fft / 2;
  const std::size_t n = waveform.size();
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad);
    if (src < 0) src = -src;
    if (src >= static_cast<std::ptrdiff_t>(n)) src = 2 * static_cast<std::ptrdiff_t>(n - 1) - src;
    padded[i] = waveform[static_cast<std::size_t>(src)];
  }
  std::vector<double> hann(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(n_fft));

  const std::size_t bins = n_fft / 2 + 1;
  const std::vector<double> fb = mel_filterbank(opts);
  const std::size_t frames = 1 + n / hop;

  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(n_fft), &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(bins), &fftw_free);
  std::unique_ptr<fftw_plan_s, decltype(&fftw_destroy_plan)> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in.get(), out.get(), FFTW_ESTIMATE), &fftw_destroy_plan);

  AudioFeatureSequence result;
  result.feature_dim = opts.n_mels;
  result.rate_multiple = kAudioRateMultiple;
  result.values.resize(frames * opts.n_mels);
  std::vector<double> power(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < n_fft; ++i) in.get()[i] = padded[f * hop + i] * hann[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) power[k] = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
    for (std::size_t m = 0; m < opts.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb[m * bins + k] * power[k];
      result.values[f * opts.n_mels + m] = static_cast<float>(10.0 * std::log10(std::max(e, opts.log_floor)));
    }
  }
  return result;
}

}  // namespace dyad
