// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyad/baselines.hpp"
#include "dyad/config.hpp"
#include "dyad/dataset.hpp"
#include "dyad/metrics.hpp"
#include "dyad/predictor.hpp"
#include "dyad/vqvae.hpp"

namespace dyad {

struct DataSplits {
  std::vector<DyadSample> train, val, test;
};

enum class SplitPart { All, Train, Val, Test };
SplitPart parse_split(const std::string& name);

// Cuts every sample into non-overlapping `length`-frame windows (in sample
// and time order) and assigns contiguous blocks of that list to train, val
// and test by ratio. Trailing frames shorter than a window are dropped.
DataSplits split_windows(const std::vector<DyadSample>& samples, std::size_t length, const SplitRatios& ratios);
std::vector<DyadSample> select_split(const std::vector<DyadSample>& samples, std::size_t length,
                                     const SplitRatios& ratios, SplitPart part);

// Listener sub-windows of `length` frames every `stride` frames.
std::vector<MotionSequence> listener_windows(const std::vector<DyadSample>& samples, std::size_t length,
                                             std::size_t stride);

std::vector<DyadSample> standardize(const std::vector<DyadSample>& samples, const Standardization& s);
nlohmann::json to_json(const Standardization& s);
Standardization standardization_from_json(const nlohmann::json& j);

// Trained VQ-VAE with the configuration and statistics it was fitted with.
struct VqBundle {
  ExperimentConfig config;
  Standardization standardization;
  VqVae model;
  std::size_t epochs_done = 0;
  nlohmann::json history = nlohmann::json::array();  // per-epoch stats
  std::optional<AdamState> adam;
};

struct ListenerBundle {
  ExperimentConfig config;
  ListenerModel model;
  std::size_t epochs_done = 0;
  nlohmann::json history = nlohmann::json::array();
  std::optional<AdamState> adam;
  double initial_ce = 0.0;
};

VqBundle load_vq_bundle(const std::filesystem::path& path);
ListenerBundle load_listener_bundle(const std::filesystem::path& path);

struct TrainOutcome {
  nlohmann::json report;  // config echo, per-epoch stats and summary
};

// Trains on the train split of `dataset`; checkpoints after every epoch and,
// with `resume`, continues from an existing checkpoint at `checkpoint`.
TrainOutcome run_train_vqvae(const ExperimentConfig& config, const DyadDataset& dataset,
                             const std::filesystem::path& checkpoint, bool resume, std::ostream* log = nullptr);

// The VQ-VAE bundle fixes the standardisation and codebook; its config
// must agree with `config` on the VQ-VAE keys.
TrainOutcome run_train_predictor(const ExperimentConfig& config, const DyadDataset& dataset,
                                 const std::filesystem::path& vq_checkpoint, const std::filesystem::path& checkpoint,
                                 bool resume, std::ostream* log = nullptr);

struct GenerateOptions {
  std::size_t samples = 1;
  std::optional<double> nucleus_p;     // default from the predictor's config
  std::optional<std::size_t> frames;   // default: whole speaker, rounded down to 8
  std::uint64_t seed = 0;
};

// `samples` rollouts per speaker, returned in raw (un-standardised) units.
// Ids are "<speaker id>-generated" plus "-<i>" when samples > 1.
std::vector<DyadSample> generate_listeners(const VqBundle& vq, const ListenerBundle& listener,
                                           const std::vector<DyadSample>& speakers, const GenerateOptions& options);

struct EvaluateRequest {
  std::vector<DyadSample> ground_truth;  // cut into config.sequence_length windows
  std::vector<DyadSample> train_bank;    // raw training dyads for baselines and clustering
  std::vector<std::string> methods;      // baseline names, "ours" (needs predictions) and "gt"
  std::vector<DyadSample> predictions;   // generated dyads matched by id to ground truth
  const VqBundle* vq = nullptr;
  const ListenerBundle* listener = nullptr;
  std::size_t multi_sample = 0;          // > 0: add the best-of-x L2 curve
  std::uint64_t seed = 0;
};

struct EvaluationResult {
  std::vector<metrics::MetricsReport> rows;
  std::vector<double> multi_sample_curve;
  nlohmann::json to_json(const ExperimentConfig& config) const;
  std::string to_text() const;
};

// Method names accepted besides the baselines.
const std::vector<std::string>& model_method_names();

EvaluationResult run_evaluate(const ExperimentConfig& config, const EvaluateRequest& request);

}  // namespace dyad
