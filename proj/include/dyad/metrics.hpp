// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyad/motion.hpp"

namespace dyad::metrics {

// One sequence as a [T, F] matrix; all metric arithmetic is double.
using Sequence = Eigen::MatrixXd;
using SequenceSet = std::vector<Sequence>;

enum class Stream { Expression, Rotation };

// Expression ([T, d_m]) or rotation ([T, 3]) block of each sequence.
SequenceSet extract(const std::vector<MotionSequence>& seqs, Stream stream);

// Mean over sequences and frames of the per-frame Euclidean distance.
double l2(const SequenceSet& pred, const SequenceSet& gt);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1)
};

// Sequences are flattened row-major to R^{T*F}. Needs >= 2 sequences.
Gaussian fit_gaussian(const SequenceSet& set);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the trace of the
// square root is taken from the eigenvalues of the symmetrised
// S_a^{1/2} S_b S_a^{1/2}, negatives clamped to zero.
double frechet_distance(const Gaussian& a, const Gaussian& b);

// Same quantity for n_a + n_b < dim: tr (S_a S_b)^{1/2} equals the nuclear
// norm of X_a X_b^T / sqrt((n_a - 1)(n_b - 1)) for centred data rows.
double frechet_distance_gram(const SequenceSet& a, const SequenceSet& b);

// Picks the eigen or Gram route by dimension; reports d^2.
double frechet_distance(const SequenceSet& a, const SequenceSet& b);

// FD over channel-wise concatenation listener (+) speaker.
double paired_fd(const SequenceSet& pred_listener, const SequenceSet& gt_listener, const SequenceSet& speaker);

// Population variance along time, averaged over sequences and features.
// Single-frame sequences contribute 0.
double variation(const SequenceSet& set);

struct ClusterModel {
  Eigen::MatrixXd centroids;  // [k, F]

  std::size_t k() const { return static_cast<std::size_t>(centroids.rows()); }
  std::size_t assign(const Eigen::Ref<const Eigen::RowVectorXd>& frame) const;
};

// k-means++ seeding then Lloyd iterations on the rows of `frames`.
ClusterModel fit_clusters(const Eigen::MatrixXd& frames, std::size_t k, std::uint64_t seed = 0,
                          std::size_t max_iterations = 100);
ClusterModel fit_clusters(const SequenceSet& training, std::size_t k, std::uint64_t seed = 0,
                          std::size_t max_iterations = 100);

// Entropy (nats) of the cluster-id histogram over every frame of `set`.
double shannon_index(const ClusterModel& model, const SequenceSet& set);

double pcc(std::span<const double> x, std::span<const double> y);

enum class Channel { ExpressionSmile, RotationNod };

// Linear functional over expression coefficients used for the smile
// channel; default picks coefficient 0.
struct Projection {
  std::vector<double> smile_weights{1.0};
};

std::vector<double> project_1d(const MotionSequence& seq, Channel channel, const Projection& projection = {});

struct TlccResult {
  std::vector<double> curve;  // PCC at lag 0..max_lag
  std::size_t peak_lag = 0;
};

// Speaker shifted forward by x frames: PCC(speaker[0, N-x), listener[x, N)).
TlccResult tlcc(std::span<const double> speaker, std::span<const double> listener, std::size_t max_lag = 60);

struct StreamMetrics {
  double l2 = 0.0;
  double fd = 0.0;
  double variation = 0.0;
  double si = 0.0;
  double p_fd = 0.0;
  std::optional<double> pcc;            // empty when degenerate
  std::optional<double> tlcc_peak_lag;  // mean over sequences
};

struct MetricsReport {
  std::string method;
  StreamMetrics expression;
  StreamMetrics rotation;
  std::size_t sample_count = 0;
};

struct EvaluationContext {
  ClusterModel expression_clusters;
  ClusterModel rotation_clusters;
  Projection projection;
  std::size_t max_lag = 60;
};

ClusterModel fit_stream_clusters(const std::vector<MotionSequence>& training_listeners, Stream stream, std::size_t k,
                                 std::uint64_t seed);

// Full suite for one method: predictions, ground-truth listeners and their
// speakers are aligned window by window.
MetricsReport evaluate(const std::string& method, const std::vector<MotionSequence>& pred,
                       const std::vector<MotionSequence>& gt, const std::vector<MotionSequence>& speakers,
                       const EvaluationContext& ctx);

}  // namespace dyad::metrics
