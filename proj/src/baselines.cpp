// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dyad/errors.hpp"

namespace dyad {

TrainBank TrainBank::build(const std::vector<DyadSample>& samples, std::size_t window) {
  if (window == 0) throw ConfigError("train bank: window must be positive");
  TrainBank bank;
  bank.window_ = window;
  for (const auto& s : samples) {
    for (std::size_t start = 0; start + window <= s.length(); start += window) {
      bank.windows_.push_back(dyad::window(s, start, window));
    }
  }
  if (bank.windows_.empty()) return bank;
  bank.motion_key_dim_ = bank.windows_[0].speaker_motion.values().size();
  bank.audio_key_dim_ = 2 * bank.windows_[0].speaker_audio.feature_dim;
  for (const auto& w : bank.windows_) {
    if (w.speaker_motion.values().size() != bank.motion_key_dim_ ||
        2 * w.speaker_audio.feature_dim != bank.audio_key_dim_) {
      throw ShapeError("train bank: windows with differing feature dimensions");
    }
    const auto& m = w.speaker_motion.values();
    bank.motion_keys_.insert(bank.motion_keys_.end(), m.begin(), m.end());
    const auto stats = audio_statistics(w.speaker_audio);
    bank.audio_keys_.insert(bank.audio_keys_.end(), stats.begin(), stats.end());
  }
  return bank;
}

std::span<const float> TrainBank::motion_key(std::size_t i) const {
  return std::span<const float>(motion_keys_).subspan(i * motion_key_dim_, motion_key_dim_);
}

std::span<const double> TrainBank::audio_key(std::size_t i) const {
  return std::span<const double>(audio_keys_).subspan(i * audio_key_dim_, audio_key_dim_);
}

std::vector<double> audio_statistics(const AudioFeatureSequence& audio) {
  const std::size_t n = audio.length(), da = audio.feature_dim;
  if (n == 0) throw EmptyInput("audio statistics: no frames");
  std::vector<double> out(2 * da, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < da; ++j) out[j] += audio.values[t * da + j];
  }
  for (std::size_t j = 0; j < da; ++j) out[j] /= static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < da; ++j) {
      const double d = audio.values[t * da + j] - out[j];
      out[da + j] += d * d;
    }
  }
  for (std::size_t j = 0; j < da; ++j) out[da + j] = std::sqrt(out[da + j] / static_cast<double>(n));
  return out;
}

namespace {

void require_bank(const TrainBank& bank, const char* who) {
  if (bank.empty()) throw EmptyInput(std::string(who) + ": empty training bank");
}

template <typename A, typename B>
std::size_t argmin_distance(std::size_t count, std::span<const A> query, const auto& key_of) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const std::span<const B> key = key_of(i);
    double d = 0.0;
    for (std::size_t j = 0; j < key.size(); ++j) {
      const double diff = static_cast<double>(query[j]) - static_cast<double>(key[j]);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::size_t nearest_motion_index(const TrainBank& bank, const MotionSequence& speaker) {
  require_bank(bank, "nn_motion");
  if (speaker.length() != bank.window() || speaker.values().size() != bank.motion_key(0).size()) {
    throw ShapeError("nn_motion: query of " + std::to_string(speaker.length()) + " frames x " +
                     std::to_string(speaker.channels()) + " channels, bank windows are " +
                     std::to_string(bank.window()) + " frames");
  }
  return argmin_distance<float, float>(bank.size(), std::span<const float>(speaker.values()),
                                       [&](std::size_t i) { return bank.motion_key(i); });
}

std::size_t nearest_audio_index(const TrainBank& bank, const AudioFeatureSequence& audio) {
  require_bank(bank, "nn_audio");
  const auto stats = audio_statistics(audio);
  if (stats.size() != bank.audio_key(0).size()) {
    throw ShapeError("nn_audio: query has " + std::to_string(audio.feature_dim) + " feature bins, bank has " +
                     std::to_string(bank.audio_key(0).size() / 2));
  }
  return argmin_distance<double, double>(bank.size(), std::span<const double>(stats),
                                         [&](std::size_t i) { return bank.audio_key(i); });
}

MotionSequence nn_motion(const TrainBank& bank, const MotionSequence& speaker) {
  return bank.entry(nearest_motion_index(bank, speaker)).listener_motion;
}

MotionSequence nn_audio(const TrainBank& bank, const AudioFeatureSequence& audio) {
  return bank.entry(nearest_audio_index(bank, audio)).listener_motion;
}

MotionSequence random_window(const TrainBank& bank, Rng& rng) {
  require_bank(bank, "random");
  return bank.entry(rng.below(bank.size())).listener_motion;
}

MotionSequence median_pose(const TrainBank& bank, std::size_t length) {
  require_bank(bank, "median");
  const MotionSequence& first = bank.entry(0).listener_motion;
  const std::size_t ch = first.channels();
  std::vector<float> column;
  MotionSequence out(first.expression_dim(), length, first.fps());
  for (std::size_t c = 0; c < ch; ++c) {
    column.clear();
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const auto& seq = bank.entry(i).listener_motion;
      for (std::size_t t = 0; t < seq.length(); ++t) column.push_back(seq.at(t, c));
    }
    std::sort(column.begin(), column.end());
    const std::size_t n = column.size();
    const double med = n % 2 ? column[n / 2] : 0.5 * (static_cast<double>(column[n / 2 - 1]) + column[n / 2]);
    for (std::size_t t = 0; t < length; ++t) out.at(t, c) = static_cast<float>(med);
  }
  return out;
}

MotionSequence random_expression(const TrainBank& bank, Rng& rng, std::size_t length) {
  require_bank(bank, "random_expression");
  const MotionSequence& first = bank.entry(0).listener_motion;
  MotionSequence out(first.expression_dim(), length, first.fps());
  const std::size_t per = bank.window();
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t k = rng.below(bank.size() * per);
    const auto src = bank.entry(k / per).listener_motion.row(k % per);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

MotionSequence mirror(const MotionSequence& speaker, std::size_t radius) {
  if (speaker.empty()) throw EmptyInput("mirror: empty speaker");
  const std::size_t n = speaker.length(), ch = speaker.channels();
  if (radius == 0) return speaker;
  if (n < 2) return speaker;
  const auto reflect = [n](std::ptrdiff_t i) {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (i < 0 || i > last) i = i < 0 ? -i : 2 * last - i;
    return static_cast<std::size_t>(i);
  };
  MotionSequence out = speaker;
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -r; k <= r; ++k) acc += speaker.at(reflect(static_cast<std::ptrdiff_t>(t) + k), c);
      out.at(t, c) = static_cast<float>(acc / static_cast<double>(2 * radius + 1));
    }
  }
  return out;
}

MotionSequence delayed_mirror(const MotionSequence& speaker, std::size_t delay, std::size_t radius) {
  const MotionSequence smooth = mirror(speaker, radius);
  if (delay == 0) return smooth;
  MotionSequence out = smooth;
  const std::size_t n = smooth.length();
  for (std::size_t t = 0; t < n; ++t) {
    const auto src = smooth.row(t >= delay ? t - delay : 0);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

std::vector<int> random_walk_tokens(std::size_t codebook_size, std::size_t steps, Rng& rng) {
  if (codebook_size == 0) throw ContractError("random walk: empty codebook");
  std::vector<int> tokens(steps);
  for (int& t : tokens) t = static_cast<int>(rng.below(codebook_size));
  return tokens;
}

MotionSequence codebook_random_walk(const VqVae& vqvae, std::size_t steps, Rng& rng) {
  if (steps == 0) throw ContractError("random walk: zero steps");
  return vqvae.detokenize(random_walk_tokens(vqvae.config().codebook_size, steps, rng));
}

const std::vector<std::string>& baseline_names() {
  static const std::vector<std::string> names{"nn_motion",     "nn_audio",       "random",
                                              "median",        "mirror",         "delayed_mirror",
                                              "random_expression", "codebook_random_walk"};
  return names;
}

bool is_baseline(const std::string& name) {
  const auto& names = baseline_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

MotionSequence run_baseline(const std::string& name, const BaselineContext& context, const DyadSample& query,
                            Rng& rng) {
  if (!is_baseline(name)) throw ConfigError("unknown baseline '" + name + "'");
  const bool needs_bank = name != "mirror" && name != "delayed_mirror" && name != "codebook_random_walk";
  if (needs_bank && !context.bank) throw ContractError("baseline '" + name + "' needs a training bank");
  const std::size_t len = query.length();
  if (name == "nn_motion") return nn_motion(*context.bank, query.speaker_motion);
  if (name == "nn_audio") return nn_audio(*context.bank, query.speaker_audio);
  if (name == "random") return random_window(*context.bank, rng);
  if (name == "median") return median_pose(*context.bank, len);
  if (name == "mirror") return mirror(query.speaker_motion, context.mirror_radius);
  if (name == "delayed_mirror") return delayed_mirror(query.speaker_motion, context.delay, context.mirror_radius);
  if (name == "random_expression") return random_expression(*context.bank, rng, len);
  if (!context.vqvae) throw ContractError("baseline 'codebook_random_walk' needs a trained VQ-VAE");
  MotionSequence out = codebook_random_walk(*context.vqvae, len / kTokenWindow, rng);
  MotionSequence seq(out.expression_dim(), query.speaker_motion.fps());
  seq.values() = std::move(out.values());
  return seq;
}

}  // namespace dyad
