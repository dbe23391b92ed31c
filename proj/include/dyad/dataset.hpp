// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "dyad/motion.hpp"

namespace dyad {

// Per-coefficient expression standardisation, shared by both motion streams.
struct Standardization {
  std::vector<float> mean;
  std::vector<float> stddev;

  static Standardization identity(std::size_t dm);
  // Statistics over every speaker and listener frame of `samples`.
  static Standardization fit(const std::vector<DyadSample>& samples);

  MotionSequence apply(const MotionSequence& seq) const;
  MotionSequence invert(const MotionSequence& seq) const;
  bool operator==(const Standardization&) const = default;
};

struct DyadDataset {
  std::size_t expression_dim = kDefaultExpressionDim;
  std::size_t audio_dim = kDefaultAudioDim;
  double fps = kDefaultFps;
  std::size_t rate_multiple = kAudioRateMultiple;
  Standardization standardization;
  std::vector<DyadSample> samples;

  // Fills dims from the first sample and fits standardisation.
  static DyadDataset from_samples(std::vector<DyadSample> samples);
};

// File layout: "DYAD", u16 version, u32 header length, UTF-8 JSON header
// (d_m, d_a, fps, rate_multiple, standardisation vectors, sample count and
// per-sample id / length / audio_length / byte offset), then per sample
// three little-endian f32 blocks: speaker motion, speaker audio, listener
// motion. Values are stored un-standardised.
void write_dyad_file(const DyadDataset& dataset, const std::filesystem::path& path);

// `expected_dm`, when given, must match the file's d_m.
DyadDataset read_dyad_file(const std::filesystem::path& path,
                           std::optional<std::size_t> expected_dm = std::nullopt);

}  // namespace dyad
