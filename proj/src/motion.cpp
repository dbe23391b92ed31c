// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/motion.hpp"

#include <algorithm>
#include <cmath>

#include "dyad/errors.hpp"

namespace dyad {

double wrap_angle(double radians) {
  double y = std::fmod(radians + M_PI, 2.0 * M_PI);
  if (y < 0.0) y += 2.0 * M_PI;
  y -= M_PI;
  return y == -M_PI ? M_PI : y;
}

void MotionSequence::push_back(const FacialFrame& frame) {
  if (frame.expression.size() != dm_) {
    throw ShapeError("frame has " + std::to_string(frame.expression.size()) + " expression values, sequence expects " +
                     std::to_string(dm_));
  }
  values_.insert(values_.end(), frame.expression.begin(), frame.expression.end());
  values_.insert(values_.end(), frame.rotation.begin(), frame.rotation.end());
}

FacialFrame MotionSequence::frame(std::size_t t) const {
  if (t >= length()) throw RangeError("frame " + std::to_string(t) + " of " + std::to_string(length()));
  FacialFrame f;
  auto r = row(t);
  f.expression.assign(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(dm_));
  std::copy(r.begin() + static_cast<std::ptrdiff_t>(dm_), r.end(), f.rotation.begin());
  return f;
}

MotionSequence MotionSequence::slice(std::size_t start, std::size_t len) const {
  if (start + len > length()) {
    throw RangeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) + ") of " +
                     std::to_string(length()) + " frames");
  }
  MotionSequence out(dm_, fps_);
  out.values_.assign(values_.begin() + static_cast<std::ptrdiff_t>(start * channels()),
                     values_.begin() + static_cast<std::ptrdiff_t>((start + len) * channels()));
  return out;
}

void validate(const DyadSample& s) {
  const auto& sm = s.speaker_motion;
  const auto& lm = s.listener_motion;
  if (sm.length() != lm.length() || sm.expression_dim() != lm.expression_dim()) {
    throw ShapeError("sample '" + s.id + "': speaker " + std::to_string(sm.length()) + "x" +
                     std::to_string(sm.channels()) + " vs listener " + std::to_string(lm.length()) + "x" +
                     std::to_string(lm.channels()));
  }
  const std::size_t r = s.speaker_audio.rate_multiple;
  const std::size_t expected = r * sm.length();
  const std::size_t got = s.speaker_audio.length();
  const std::size_t gap = got > expected ? got - expected : expected - got;
  if (r == 0 || gap >= r) {
    throw ShapeError("sample '" + s.id + "': " + std::to_string(got) + " audio frames for " +
                     std::to_string(sm.length()) + " motion frames at rate " + std::to_string(r));
  }
}

MotionSequence normalize_rest_pose(const MotionSequence& seq) {
  if (seq.empty()) throw EmptyInput("normalize_rest_pose: empty sequence");
  const std::size_t dm = seq.expression_dim();
  std::array<double, 3> mean{};
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t a = 0; a < 3; ++a) mean[a] += seq.rotation(t, a);
  }
  for (double& m : mean) m /= static_cast<double>(seq.length());
  MotionSequence out = seq;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t a = 0; a < 3; ++a) {
      out.at(t, dm + a) = static_cast<float>(wrap_angle(seq.rotation(t, a) - mean[a]));
    }
  }
  return out;
}

DyadSample window(const DyadSample& sample, std::size_t start, std::size_t length) {
  if (start + length > sample.length()) {
    throw RangeError("window [" + std::to_string(start) + ", " + std::to_string(start + length) + ") exceeds " +
                     std::to_string(sample.length()) + " frames of '" + sample.id + "'");
  }
  DyadSample w;
  w.id = sample.id;
  w.speaker_motion = sample.speaker_motion.slice(start, length);
  w.listener_motion = sample.listener_motion.slice(start, length);
  const auto& audio = sample.speaker_audio;
  w.speaker_audio.feature_dim = audio.feature_dim;
  w.speaker_audio.rate_multiple = audio.rate_multiple;
  const std::size_t a0 = start * audio.rate_multiple;
  const std::size_t n = length * audio.rate_multiple;
  w.speaker_audio.values.assign(n * audio.feature_dim, 0.0f);
  const std::size_t available = audio.length() > a0 ? std::min(n, audio.length() - a0) : 0;
  std::copy_n(audio.values.begin() + static_cast<std::ptrdiff_t>(a0 * audio.feature_dim),
              available * audio.feature_dim, w.speaker_audio.values.begin());
  return w;
}

}  // namespace dyad
