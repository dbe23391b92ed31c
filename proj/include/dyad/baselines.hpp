// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "dyad/motion.hpp"
#include "dyad/rng.hpp"
#include "dyad/vqvae.hpp"

namespace dyad {

inline constexpr std::size_t kBaselineWindow = 64;

// Non-overlapping training windows with a flat search index over speaker
// motion and over per-bin audio statistics (mean then std of each bin).
class TrainBank {
 public:
  static TrainBank build(const std::vector<DyadSample>& samples, std::size_t window = kBaselineWindow);

  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  std::size_t window() const { return window_; }
  const DyadSample& entry(std::size_t i) const { return windows_.at(i); }

  std::span<const float> motion_key(std::size_t i) const;
  std::span<const double> audio_key(std::size_t i) const;

 private:
  std::size_t window_ = kBaselineWindow;
  std::vector<DyadSample> windows_;
  std::vector<float> motion_keys_;
  std::vector<double> audio_keys_;
  std::size_t motion_key_dim_ = 0, audio_key_dim_ = 0;
};

// Mean and population std of each feature bin over the window.
std::vector<double> audio_statistics(const AudioFeatureSequence& audio);

// Index of the bank entry nearest in flattened speaker motion / audio
// statistics (squared L2, lowest index on ties).
std::size_t nearest_motion_index(const TrainBank& bank, const MotionSequence& speaker);
std::size_t nearest_audio_index(const TrainBank& bank, const AudioFeatureSequence& audio);

MotionSequence nn_motion(const TrainBank& bank, const MotionSequence& speaker);
MotionSequence nn_audio(const TrainBank& bank, const AudioFeatureSequence& audio);
MotionSequence random_window(const TrainBank& bank, Rng& rng);
// Per-coordinate median over every bank listener frame, held for `length`.
MotionSequence median_pose(const TrainBank& bank, std::size_t length = kBaselineWindow);
// Every frame drawn independently from all bank listener frames.
MotionSequence random_expression(const TrainBank& bank, Rng& rng, std::size_t length = kBaselineWindow);

// Centred moving average with reflective padding (x[-k] = x[k]).
MotionSequence mirror(const MotionSequence& speaker, std::size_t radius = 3);
// mirror() shifted right by `delay`; the gap holds the first smoothed frame.
MotionSequence delayed_mirror(const MotionSequence& speaker, std::size_t delay = 17, std::size_t radius = 3);

// Uniform token per step, decoded by the frozen decoder.
std::vector<int> random_walk_tokens(std::size_t codebook_size, std::size_t steps, Rng& rng);
MotionSequence codebook_random_walk(const VqVae& vqvae, std::size_t steps, Rng& rng);

struct BaselineContext {
  const TrainBank* bank = nullptr;
  const VqVae* vqvae = nullptr;
  std::size_t mirror_radius = 3;
  std::size_t delay = 17;
};

// Names accepted by run_baseline, in report order.
const std::vector<std::string>& baseline_names();
bool is_baseline(const std::string& name);

// Runs a baseline for one query sample; the output matches the query's
// length where the method allows. Unknown names raise ConfigError; a
// missing bank or VQ-VAE raises ContractError.
MotionSequence run_baseline(const std::string& name, const BaselineContext& context, const DyadSample& query,
                            Rng& rng);

}  // namespace dyad
