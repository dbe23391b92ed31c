// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/synth.hpp"

#include <array>
#include <cmath>

#include "dyad/errors.hpp"
#include "dyad/rng.hpp"

namespace dyad {

namespace {

constexpr std::size_t kSources = 3;
constexpr double kRotationScale = 0.3;
constexpr std::uint64_t kWorldSeed = 0x5eedd1ad;

struct Source {
  std::array<double, 2> amp{}, freq{}, phase{};

  static Source draw(Rng& rng) {
    Source s;
    s.amp = {rng.uniform(0.6, 1.0), rng.uniform(0.6, 1.0)};
    s.freq = {rng.uniform(0.15, 0.35), rng.uniform(0.5, 0.9)};
    s.phase = {rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.0, 2.0 * M_PI)};
    return s;
  }

  double operator()(double frame, double fps) const {
    double v = 0.0;
    for (int k = 0; k < 2; ++k) v += amp[k] * std::sin(2.0 * M_PI * freq[k] * frame / fps + phase[k]);
    return v;
  }
};

struct ModeResponse {
  std::array<double, kSources> gain{};
  std::size_t radius = 1;
  std::vector<double> bias;
};

// Shared across all samples; depends only on dimensions and mode index.
struct World {
  std::vector<double> speaker_mix;   // [dm, kSources]
  std::vector<double> listener_mix;  // [dm, kSources]
  std::vector<double> audio_mix;     // [da, channels]
  std::vector<double> prosody_mix;   // [da, 2]

  World(std::size_t dm, std::size_t da) {
    Rng rng = Rng(kWorldSeed).split(dm * 1000003 + da);
    Rng r_s = rng.split("speaker"), r_l = rng.split("listener"), r_a = rng.split("audio");
    const double src_scale = 1.0 / std::sqrt(static_cast<double>(kSources));
    speaker_mix.resize(dm * kSources);
    listener_mix.resize(dm * kSources);
    for (double& w : speaker_mix) w = r_s.normal() * src_scale;
    for (double& w : listener_mix) w = r_l.normal() * src_scale;
    const std::size_t ch = dm + 3;
    audio_mix.resize(da * ch);
    for (double& w : audio_mix) w = r_a.normal() / std::sqrt(static_cast<double>(ch));
    prosody_mix.resize(da * 2);
    for (double& w : prosody_mix) w = r_a.normal() / std::sqrt(2.0);
  }

  static ModeResponse mode(std::size_t m, std::size_t dm) {
    Rng rng = Rng(kWorldSeed).split("mode").split(m);
    ModeResponse r;
    r.gain[0] = rng.uniform(0.7, 1.2);
    for (std::size_t j = 1; j < kSources; ++j) r.gain[j] = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.6, 1.2);
    r.radius = 1 + rng.below(4);
    r.bias.resize(dm);
    for (double& b : r.bias) b = rng.normal();
    r.bias[0] = 0.0;
    return r;
  }
};

// Writes the expression + rotation channels implied by source values.
void render(const std::array<double, kSources>& src, const std::vector<double>& mix, const double* bias,
            std::size_t dm, std::span<float> out) {
  out[0] = static_cast<float>(src[0] + (bias ? bias[0] : 0.0));
  for (std::size_t i = 1; i < dm; ++i) {
    double v = bias ? bias[i] : 0.0;
    for (std::size_t j = 0; j < kSources; ++j) v += mix[i * kSources + j] * src[j];
    out[i] = static_cast<float>(v);
  }
  out[dm + 0] = static_cast<float>(kRotationScale * src[1]);
  out[dm + 1] = static_cast<float>(kRotationScale * src[2]);
  out[dm + 2] = static_cast<float>(0.5 * kRotationScale * src[0]);
}

}  // namespace

DyadSample synth_dyad(std::uint64_t seed, std::size_t length, std::size_t mode_count, const SynthOptions& opt,
                      SynthTruth* truth) {
  if (length < kMinSynthLength) {
    throw ContractError("synth_dyad: length " + std::to_string(length) + " < " + std::to_string(kMinSynthLength));
  }
  if (mode_count == 0) throw ContractError("synth_dyad: mode_count must be >= 1");
  const std::size_t dm = opt.expression_dim, da = opt.audio_dim;
  if (dm == 0 || da == 0) throw ContractError("synth_dyad: feature dimensions must be positive");
  const World world(dm, da);
  const double fps = opt.fps;

  Rng sample_rng(seed);
  Rng speaker_rng = opt.speaker_seed ? Rng(*opt.speaker_seed).split("speaker") : sample_rng.split("speaker");
  Rng listener_rng = sample_rng.split("listener");
  Rng noise_rng = sample_rng.split("noise");

  std::array<Source, kSources> sources;
  for (Source& s : sources) s = Source::draw(speaker_rng);
  const Source prosody = Source::draw(speaker_rng);

  const int lag = opt.lag ? *opt.lag : kMinSynthLag + static_cast<int>(listener_rng.below(kMaxSynthLag - kMinSynthLag + 1));
  const std::size_t mode = opt.mode ? *opt.mode : listener_rng.below(mode_count);
  if (mode >= mode_count) throw ContractError("synth_dyad: mode " + std::to_string(mode) + " >= mode_count");
  const ModeResponse response = World::mode(mode, dm);
  if (truth) *truth = {lag, mode, response.radius};

  // Source values driving the listener at a given frame: index 2 is the
  // prosody source when audio is informative.
  auto listener_drive = [&](double frame) {
    std::array<double, kSources> l{};
    const double r = static_cast<double>(response.radius);
    for (std::size_t j = 0; j < kSources; ++j) {
      const Source& s = (opt.audio_informative && j == 2) ? prosody : sources[j];
      double acc = 0.0;
      for (double k = -r; k <= r; k += 1.0) acc += s(frame - lag + k, fps);
      l[j] = response.gain[j] * acc / (2.0 * r + 1.0);
    }
    return l;
  };

  DyadSample out;
  out.id = "synth-" + std::to_string(seed);
  out.speaker_motion = MotionSequence(dm, length, fps);
  out.listener_motion = MotionSequence(dm, length, fps);
  for (std::size_t t = 0; t < length; ++t) {
    std::array<double, kSources> src{};
    for (std::size_t j = 0; j < kSources; ++j) src[j] = sources[j](static_cast<double>(t), fps);
    render(src, world.speaker_mix, nullptr, dm, out.speaker_motion.row(t));
    render(listener_drive(static_cast<double>(t)), world.listener_mix, response.bias.data(), dm,
           out.listener_motion.row(t));
  }

  const std::size_t ch = dm + 3;
  auto& audio = out.speaker_audio;
  audio.feature_dim = da;
  audio.rate_multiple = kAudioRateMultiple;
  audio.values.resize(length * kAudioRateMultiple * da);
  std::vector<float> motion_at(ch);
  for (std::size_t u = 0; u < length * kAudioRateMultiple; ++u) {
    const double frame = static_cast<double>(u) / kAudioRateMultiple;
    float* dst = audio.values.data() + u * da;
    if (opt.audio_informative) {
      const double a = sources[0](frame, fps), b = prosody(frame, fps);
      for (std::size_t i = 0; i < da; ++i) {
        dst[i] = static_cast<float>(world.prosody_mix[i * 2] * a + world.prosody_mix[i * 2 + 1] * b);
      }
    } else {
      std::array<double, kSources> src{};
      for (std::size_t j = 0; j < kSources; ++j) src[j] = sources[j](frame, fps);
      render(src, world.speaker_mix, nullptr, dm, motion_at);
      for (std::size_t i = 0; i < da; ++i) {
        double v = 0.0;
        for (std::size_t c = 0; c < ch; ++c) v += world.audio_mix[i * ch + c] * motion_at[c];
        dst[i] = static_cast<float>(v);
      }
    }
  }

  if (opt.noise > 0.0) {
    for (float& v : out.speaker_motion.values()) v += static_cast<float>(opt.noise * noise_rng.normal());
    for (float& v : out.listener_motion.values()) v += static_cast<float>(opt.noise * noise_rng.normal());
    for (float& v : audio.values) v += static_cast<float>(opt.noise * noise_rng.normal());
  }
  out.speaker_motion = normalize_rest_pose(out.speaker_motion);
  out.listener_motion = normalize_rest_pose(out.listener_motion);
  return out;
}

}  // namespace dyad
