// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dyad {

inline constexpr std::size_t kDefaultExpressionDim = 53;  // 50 expression + 3 jaw
inline constexpr std::size_t kDefaultAudioDim = 128;
inline constexpr std::size_t kAudioRateMultiple = 4;
inline constexpr double kDefaultFps = 30.0;

// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

struct FacialFrame {
  std::vector<float> expression;
  std::array<float, 3> rotation{};  // intrinsic XYZ: pitch, yaw, roll
};

// Row-major [T, d_m + 3] stack of frames: expression coefficients followed
// by the three head rotation angles.
class MotionSequence {
 public:
  MotionSequence() = default;
  MotionSequence(std::size_t expression_dim, double fps = kDefaultFps) : dm_(expression_dim), fps_(fps) {}
  MotionSequence(std::size_t expression_dim, std::size_t length, double fps = kDefaultFps)
      : dm_(expression_dim), fps_(fps), values_(length * (expression_dim + 3), 0.0f) {}

  std::size_t expression_dim() const { return dm_; }
  std::size_t channels() const { return dm_ + 3; }
  std::size_t length() const { return channels() ? values_.size() / channels() : 0; }
  bool empty() const { return values_.empty(); }
  double fps() const { return fps_; }

  void push_back(const FacialFrame& frame);
  FacialFrame frame(std::size_t t) const;

  std::span<float> row(std::size_t t) { return {values_.data() + t * channels(), channels()}; }
  std::span<const float> row(std::size_t t) const { return {values_.data() + t * channels(), channels()}; }
  float& at(std::size_t t, std::size_t c) { return values_[t * channels() + c]; }
  float at(std::size_t t, std::size_t c) const { return values_[t * channels() + c]; }
  float rotation(std::size_t t, std::size_t axis) const { return at(t, dm_ + axis); }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  MotionSequence slice(std::size_t start, std::size_t length) const;

  bool operator==(const MotionSequence&) const = default;

 private:
  std::size_t dm_ = kDefaultExpressionDim;
  double fps_ = kDefaultFps;
  std::vector<float> values_;
};

// Row-major [N, d_a] audio feature frames at `rate_multiple` frames per
// motion frame.
struct AudioFeatureSequence {
  std::size_t feature_dim = kDefaultAudioDim;
  std::size_t rate_multiple = kAudioRateMultiple;
  std::vector<float> values;

  std::size_t length() const { return feature_dim ? values.size() / feature_dim : 0; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * feature_dim, feature_dim}; }
  bool operator==(const AudioFeatureSequence&) const = default;
};

struct DyadSample {
  MotionSequence speaker_motion;
  AudioFeatureSequence speaker_audio;
  MotionSequence listener_motion;
  std::string id;

  std::size_t length() const { return speaker_motion.length(); }
  bool operator==(const DyadSample&) const = default;
};

// Throws ShapeError unless both motion streams share length and layout and
// the audio length is within rate_multiple - 1 of rate_multiple * length.
void validate(const DyadSample& sample);

// Subtracts the per-sequence mean head rotation and re-wraps the angles.
MotionSequence normalize_rest_pose(const MotionSequence& seq);

// Aligned slice of all three streams; audio covers rate_multiple * length
// frames, zero-padded if the source audio runs short.
DyadSample window(const DyadSample& sample, std::size_t start, std::size_t length);

}  // namespace dyad
