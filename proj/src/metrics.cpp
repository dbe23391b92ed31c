// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "dyad/errors.hpp"
#include "dyad/rng.hpp"

namespace dyad::metrics {

namespace {

void require_paired(const SequenceSet& a, const SequenceSet& b, const char* what) {
  if (a.empty() || b.empty()) throw EmptyInput(std::string(what) + ": empty set");
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                     " sequences");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) {
      throw ShapeError(std::string(what) + ": sequence " + std::to_string(i) + " is " + std::to_string(a[i].rows()) +
                       "x" + std::to_string(a[i].cols()) + " vs " + std::to_string(b[i].rows()) + "x" +
                       std::to_string(b[i].cols()));
    }
  }
}

// Rows are flattened sequences.
Eigen::MatrixXd stack(const SequenceSet& set, const char* what) {
  if (set.empty()) throw EmptyInput(std::string(what) + ": empty set");
  const Eigen::Index rows = set[0].rows(), cols = set[0].cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(set.size()), rows * cols);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].rows() != rows || set[i].cols() != cols) {
      throw ShapeError(std::string(what) + ": sequence " + std::to_string(i) + " is " + std::to_string(set[i].rows()) +
                       "x" + std::to_string(set[i].cols()) + ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor rm = set[i];
    out.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(rm.data(), rows * cols);
  }
  return out;
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite values");
}

// Symmetric PSD square root via eigendecomposition, negatives clamped.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

SequenceSet concat_channels(const SequenceSet& a, const SequenceSet& b) {
  require_paired(a, a, "paired_fd");
  SequenceSet out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows()) {
      throw ShapeError("paired_fd: listener has " + std::to_string(a[i].rows()) + " frames, speaker " +
                       std::to_string(b[i].rows()));
    }
    Eigen::MatrixXd m(a[i].rows(), a[i].cols() + b[i].cols());
    m << a[i], b[i];
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

SequenceSet extract(const std::vector<MotionSequence>& seqs, Stream stream) {
  SequenceSet out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) {
    const std::size_t dm = s.expression_dim();
    const std::size_t c0 = stream == Stream::Expression ? 0 : dm;
    const std::size_t nc = stream == Stream::Expression ? dm : 3;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(s.length()), static_cast<Eigen::Index>(nc));
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t c = 0; c < nc; ++c) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = s.at(t, c0 + c);
    }
    out.push_back(std::move(m));
  }
  return out;
}

double l2(const SequenceSet& pred, const SequenceSet& gt) {
  require_paired(pred, gt, "l2");
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += (pred[i] - gt[i]).rowwise().norm().sum();
    frames += static_cast<std::size_t>(pred[i].rows());
  }
  if (frames == 0) throw EmptyInput("l2: no frames");
  return total / static_cast<double>(frames);
}

Gaussian fit_gaussian(const SequenceSet& set) {
  if (set.size() < 2) throw ContractError("fit_gaussian: need at least 2 sequences, got " + std::to_string(set.size()));
  const Eigen::MatrixXd x = stack(set, "fit_gaussian");
  require_finite(x, "fit_gaussian");
  Gaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - g.mean.transpose();
  g.cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  return g;
}

double frechet_distance(const Gaussian& a, const Gaussian& b) {
  if (a.mean.size() != b.mean.size()) {
    throw ShapeError("frechet_distance: dim " + std::to_string(a.mean.size()) + " vs " + std::to_string(b.mean.size()));
  }
  require_finite(a.cov, "frechet_distance");
  require_finite(b.cov, "frechet_distance");
  const Eigen::MatrixXd sa = sqrt_psd(a.cov);
  Eigen::MatrixXd m = sa * b.cov * sa;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("frechet_distance: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(d)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(d, 0.0);
}

double frechet_distance_gram(const SequenceSet& a, const SequenceSet& b) {
  if (a.size() < 2 || b.size() < 2) throw ContractError("frechet_distance: need at least 2 sequences per set");
  const Eigen::MatrixXd xa = stack(a, "frechet_distance"), xb = stack(b, "frechet_distance");
  if (xa.cols() != xb.cols()) {
    throw ShapeError("frechet_distance: dim " + std::to_string(xa.cols()) + " vs " + std::to_string(xb.cols()));
  }
  require_finite(xa, "frechet_distance");
  require_finite(xb, "frechet_distance");
  const Eigen::RowVectorXd ma = xa.colwise().mean(), mb = xb.colwise().mean();
  const Eigen::MatrixXd ca = xa.rowwise() - ma, cb = xb.rowwise() - mb;
  const double na1 = static_cast<double>(xa.rows() - 1), nb1 = static_cast<double>(xb.rows() - 1);
  const Eigen::MatrixXd cross = ca * cb.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(cross);
  const double tr_sqrt = svd.singularValues().sum() / std::sqrt(na1 * nb1);
  const double d = (ma - mb).squaredNorm() + ca.squaredNorm() / na1 + cb.squaredNorm() / nb1 - 2.0 * tr_sqrt;
  if (!std::isfinite(d)) throw NumericalError("frechet_distance: non-finite result");
  return std::max(d, 0.0);
}

double frechet_distance(const SequenceSet& a, const SequenceSet& b) {
  if (a.empty() || b.empty()) throw EmptyInput("frechet_distance: empty set");
  const auto dim = static_cast<std::size_t>(a[0].rows() * a[0].cols());
  if (a.size() + b.size() < dim) return frechet_distance_gram(a, b);
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

double paired_fd(const SequenceSet& pred_listener, const SequenceSet& gt_listener, const SequenceSet& speaker) {
  require_paired(pred_listener, gt_listener, "paired_fd");
  if (speaker.size() != pred_listener.size()) {
    throw ShapeError("paired_fd: " + std::to_string(pred_listener.size()) + " listeners vs " +
                     std::to_string(speaker.size()) + " speakers");
  }
  return frechet_distance(concat_channels(pred_listener, speaker), concat_channels(gt_listener, speaker));
}

double variation(const SequenceSet& set) {
  if (set.empty()) throw EmptyInput("variation: empty set");
  double total = 0.0;
  bool warned = false;
  for (const auto& s : set) {
    if (s.rows() == 0 || s.cols() == 0) throw EmptyInput("variation: empty sequence");
    if (s.rows() == 1) {
      if (!warned) std::clog << "warning: variation of a single-frame sequence taken as 0\n";
      warned = true;
      continue;
    }
    const Eigen::RowVectorXd mu = s.colwise().mean();
    total += (s.rowwise() - mu).array().square().colwise().mean().mean();
  }
  return total / static_cast<double>(set.size());
}

std::size_t ClusterModel::assign(const Eigen::Ref<const Eigen::RowVectorXd>& frame) const {
  if (frame.size() != centroids.cols()) {
    throw ShapeError("cluster assign: frame dim " + std::to_string(frame.size()) + " vs " +
                     std::to_string(centroids.cols()));
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - frame).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(c);
    }
  }
  return best;
}

ClusterModel fit_clusters(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n == 0) throw EmptyInput("fit_clusters: no frames");
  if (k == 0 || k > n) {
    throw ContractError("fit_clusters: k = " + std::to_string(k) + " with " + std::to_string(n) + " frames");
  }
  require_finite(x, "fit_clusters");
  Rng rng(seed);
  ClusterModel model;
  model.centroids.resize(static_cast<Eigen::Index>(k), x.cols());

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    model.centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - model.centroids.row(static_cast<Eigen::Index>(c)))
                                  .squaredNorm());
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      pick = rng.below(n);
      continue;
    }
    double u = rng.uniform() * total;
    pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      u -= d2[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
  }

  std::vector<std::size_t> label(n, k);
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = model.assign(x.row(static_cast<Eigen::Index>(i)));
      if (a != label[i]) {
        label[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), x.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum.row(static_cast<Eigen::Index>(label[i])) += x.row(static_cast<Eigen::Index>(i));
      ++count[label[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      if (count[c] > 0) {
        model.centroids.row(ci) = sum.row(ci) / static_cast<double>(count[c]);
        continue;
      }
      // Empty cluster: move it onto the frame farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (x.row(static_cast<Eigen::Index>(i)) - model.centroids.row(static_cast<Eigen::Index>(label[i])))
                             .squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      model.centroids.row(ci) = x.row(static_cast<Eigen::Index>(far));
    }
  }
  return model;
}

ClusterModel fit_clusters(const SequenceSet& training, std::size_t k, std::uint64_t seed,
                          std::size_t max_iterations) {
  if (training.empty()) throw EmptyInput("fit_clusters: empty set");
  Eigen::Index rows = 0;
  for (const auto& s : training) rows += s.rows();
  Eigen::MatrixXd x(rows, training[0].cols());
  Eigen::Index r = 0;
  for (const auto& s : training) {
    if (s.cols() != x.cols()) throw ShapeError("fit_clusters: inconsistent feature dims");
    x.middleRows(r, s.rows()) = s;
    r += s.rows();
  }
  return fit_clusters(x, k, seed, max_iterations);
}

double shannon_index(const ClusterModel& model, const SequenceSet& set) {
  if (set.empty()) throw EmptyInput("shannon_index: empty set");
  std::vector<double> hist(model.k(), 0.0);
  double total = 0.0;
  for (const auto& s : set) {
    for (Eigen::Index t = 0; t < s.rows(); ++t) {
      hist[model.assign(s.row(t))] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw EmptyInput("shannon_index: no frames");
  double h = 0.0;
  for (double c : hist) {
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  }
  return h;
}

double pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("pcc: lengths " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw EmptyInput("pcc: need at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateInput("pcc: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> project_1d(const MotionSequence& seq, Channel channel, const Projection& projection) {
  std::vector<double> out(seq.length());
  if (channel == Channel::RotationNod) {
    for (std::size_t t = 0; t < seq.length(); ++t) out[t] = seq.rotation(t, 0);
    return out;
  }
  const auto& w = projection.smile_weights;
  if (w.size() > seq.expression_dim()) {
    throw ShapeError("project_1d: " + std::to_string(w.size()) + " weights for " +
                     std::to_string(seq.expression_dim()) + " coefficients");
  }
  for (std::size_t t = 0; t < seq.length(); ++t) {
    double v = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) v += w[c] * seq.at(t, c);
    out[t] = v;
  }
  return out;
}

TlccResult tlcc(std::span<const double> speaker, std::span<const double> listener, std::size_t max_lag) {
  if (speaker.size() != listener.size()) {
    throw ShapeError("tlcc: lengths " + std::to_string(speaker.size()) + " vs " + std::to_string(listener.size()));
  }
  if (speaker.size() < max_lag + 2) {
    throw ContractError("tlcc: " + std::to_string(speaker.size()) + " frames cannot cover lag " +
                        std::to_string(max_lag));
  }
  const std::size_t n = speaker.size();
  TlccResult r;
  r.curve.resize(max_lag + 1);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x <= max_lag; ++x) {
    r.curve[x] = pcc(speaker.subspan(0, n - x), listener.subspan(x, n - x));
    if (r.curve[x] > best) {
      best = r.curve[x];
      r.peak_lag = x;
    }
  }
  return r;
}

ClusterModel fit_stream_clusters(const std::vector<MotionSequence>& training_listeners, Stream stream, std::size_t k,
                                 std::uint64_t seed) {
  return fit_clusters(extract(training_listeners, stream), k, seed);
}

MetricsReport evaluate(const std::string& method, const std::vector<MotionSequence>& pred,
                       const std::vector<MotionSequence>& gt, const std::vector<MotionSequence>& speakers,
                       const EvaluationContext& ctx) {
  if (pred.empty()) throw EmptyInput("evaluate: no predictions for '" + method + "'");
  if (pred.size() != gt.size() || pred.size() != speakers.size()) {
    throw ShapeError("evaluate: " + std::to_string(pred.size()) + " predictions, " + std::to_string(gt.size()) +
                     " ground truth, " + std::to_string(speakers.size()) + " speakers");
  }
  MetricsReport rep;
  rep.method = method;
  rep.sample_count = pred.size();

  auto fill = [&](Stream stream, const ClusterModel& clusters, Channel channel, StreamMetrics& m) {
    const SequenceSet p = extract(pred, stream), g = extract(gt, stream), s = extract(speakers, stream);
    m.l2 = l2(p, g);
    m.fd = frechet_distance(p, g);
    m.variation = variation(p);
    m.si = shannon_index(clusters, p);
    m.p_fd = paired_fd(p, g, s);

    double pcc_sum = 0.0, lag_sum = 0.0;
    std::size_t pcc_n = 0, lag_n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto sp = project_1d(speakers[i], channel, ctx.projection);
      const auto li = project_1d(pred[i], channel, ctx.projection);
      try {
        pcc_sum += pcc(sp, li);
        ++pcc_n;
      } catch (const DegenerateInput&) {
      }
      if (sp.size() >= ctx.max_lag + 2) {
        try {
          lag_sum += static_cast<double>(tlcc(sp, li, ctx.max_lag).peak_lag);
          ++lag_n;
        } catch (const DegenerateInput&) {
        }
      }
    }
    if (pcc_n) m.pcc = pcc_sum / static_cast<double>(pcc_n);
    if (lag_n) m.tlcc_peak_lag = lag_sum / static_cast<double>(lag_n);
  };
  fill(Stream::Expression, ctx.expression_clusters, Channel::ExpressionSmile, rep.expression);
  fill(Stream::Rotation, ctx.rotation_clusters, Channel::RotationNod, rep.rotation);
  return rep;
}

}  // namespace dyad::metrics
