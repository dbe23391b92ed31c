// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyad/predictor.hpp"
#include "dyad/speaker.hpp"
#include "dyad/vqvae.hpp"

namespace dyad {

inline constexpr const char* kConfigEnvVar = "DYAD_CONFIG";

struct SplitRatios {
  double train = 0.7, val = 0.2, test = 0.1;
};

struct MetricSettings {
  std::size_t expression_clusters = 15;
  std::size_t rotation_clusters = 9;
  std::size_t max_lag = 60;
  std::vector<double> smile_weights{1.0};
  std::uint64_t cluster_seed = 0;
};

struct ExperimentConfig {
  std::string profile = "defaults";
  std::size_t window = kTokenWindow;  // frames per token
  std::size_t sequence_length = 64;   // predictor / evaluation window
  std::size_t vq_length = 32;         // VQ-VAE training window
  std::size_t stride = kTokenWindow;  // between VQ-VAE training windows
  VqVaeConfig vqvae;
  VqTrainConfig vq_train;
  SpeakerConfig speaker;
  PredictorConfig predictor;
  PredictorTrainConfig predictor_train;
  double nucleus_p = 0.9;
  MetricSettings metrics;
  SplitRatios split;
  std::uint64_t seed = 0;

  // Full-size model and optimiser constants.
  static ExperimentConfig defaults();
  // Same structure with dimensions and schedules small enough for one CPU.
  static ExperimentConfig desk();
  static ExperimentConfig for_profile(const std::string& name);

  // Throws ConfigError on any inconsistency.
  void validate() const;

  // Sets one flat key; unknown keys and unparsable values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;  // profile line, then "key = value" lines sorted by key
  nlohmann::json to_json() const;
  // Inverse of to_map() / to_json(); validates.
  static ExperimentConfig from_map(const std::map<std::string, std::string>& values);
  static ExperimentConfig from_json(const nlohmann::json& j);

  // Feature dimensions follow the data.
  void set_feature_dims(std::size_t expression_dim, std::size_t audio_dim);
};

// Parses "key = value" lines; '#' starts a comment. A `profile` key, when
// present, selects the base before the other keys apply. Keys are applied
// in file order, then `overrides`, then validated.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});

// `explicit_path` if given, else $DYAD_CONFIG if set, else the defaults
// profile.
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                                const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace dyad
