// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "dyad/checkpoint.hpp"
#include "dyad/errors.hpp"

namespace dyad {

SplitPart parse_split(const std::string& name) {
  if (name == "all") return SplitPart::All;
  if (name == "train") return SplitPart::Train;
  if (name == "val") return SplitPart::Val;
  if (name == "test") return SplitPart::Test;
  throw ConfigError("unknown split '" + name + "' (expected all, train, val, test)");
}

DataSplits split_windows(const std::vector<DyadSample>& samples, std::size_t length, const SplitRatios& ratios) {
  if (length == 0) throw ConfigError("split: window length must be positive");
  std::vector<DyadSample> windows;
  for (const auto& s : samples) {
    for (std::size_t start = 0; start + length <= s.length(); start += length) windows.push_back(window(s, start, length));
  }
  const std::size_t n = windows.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));
  DataSplits out;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : i < n_train + n_val ? out.val : out.test;
    dst.push_back(std::move(windows[i]));
  }
  return out;
}

std::vector<DyadSample> select_split(const std::vector<DyadSample>& samples, std::size_t length,
                                     const SplitRatios& ratios, SplitPart part) {
  DataSplits s = split_windows(samples, length, ratios);
  switch (part) {
    case SplitPart::Train:
      return std::move(s.train);
    case SplitPart::Val:
      return std::move(s.val);
    case SplitPart::Test:
      return std::move(s.test);
    case SplitPart::All:
      break;
  }
  std::vector<DyadSample> all = std::move(s.train);
  for (auto* part_vec : {&s.val, &s.test}) {
    for (auto& w : *part_vec) all.push_back(std::move(w));
  }
  return all;
}

std::vector<MotionSequence> listener_windows(const std::vector<DyadSample>& samples, std::size_t length,
                                             std::size_t stride) {
  if (length == 0 || stride == 0) throw ConfigError("listener windows: length and stride must be positive");
  std::vector<MotionSequence> out;
  for (const auto& s : samples) {
    for (std::size_t start = 0; start + length <= s.length(); start += stride) {
      out.push_back(s.listener_motion.slice(start, length));
    }
  }
  return out;
}

std::vector<DyadSample> standardize(const std::vector<DyadSample>& samples, const Standardization& s) {
  std::vector<DyadSample> out = samples;
  for (auto& d : out) {
    d.speaker_motion = s.apply(d.speaker_motion);
    d.listener_motion = s.apply(d.listener_motion);
  }
  return out;
}

nlohmann::json to_json(const Standardization& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

Standardization standardization_from_json(const nlohmann::json& j) {
  try {
    Standardization s;
    s.mean = j.at("mean").get<std::vector<float>>();
    s.stddev = j.at("stddev").get<std::vector<float>>();
    if (s.mean.size() != s.stddev.size()) throw FormatError("standardization: mean/stddev length mismatch");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("standardization: ") + e.what());
  }
}

namespace {

constexpr const char* kVqKind = "vqvae";
constexpr const char* kListenerKind = "listener";

nlohmann::json checkpoint_meta(const std::string& kind, const ExperimentConfig& config, std::size_t epochs_done,
                               const nlohmann::json& history) {
  return {{"kind", kind}, {"config", config.to_json()}, {"epochs_done", epochs_done}, {"history", history}};
}

void check_kind(const Checkpoint& c, const std::string& kind, const std::filesystem::path& path) {
  const std::string found = c.metadata.value("kind", std::string());
  if (found != kind) {
    throw FormatError(path.string() + ": expected a " + kind + " checkpoint, found '" + found + "'");
  }
}

void check_data_dims(const ExperimentConfig& config, const DyadDataset& dataset) {
  if (config.vqvae.input_dim != dataset.expression_dim + 3 || config.speaker.audio_dim != dataset.audio_dim) {
    throw FormatError("config expects " + std::to_string(config.vqvae.input_dim - 3) + " expression / " +
                      std::to_string(config.speaker.audio_dim) + " audio dims, data has " +
                      std::to_string(dataset.expression_dim) + " / " + std::to_string(dataset.audio_dim));
  }
}

// Keys that may change between a checkpoint and the run resuming it.
bool resumable_key(const std::string& key) {
  return key == "vqvae.epochs" || key == "predictor.epochs";
}

void check_same(const ExperimentConfig& a, const ExperimentConfig& b, const std::string& what,
                bool (*relevant)(const std::string&)) {
  const auto ma = a.to_map(), mb = b.to_map();
  for (const auto& [k, v] : ma) {
    if (!relevant(k) || resumable_key(k)) continue;
    if (mb.at(k) != v) {
      throw ConfigError(what + ": '" + k + "' is " + mb.at(k) + " in the checkpoint but " + v + " here");
    }
  }
}

bool any_key(const std::string&) { return true; }

bool vq_key(const std::string& k) {
  return k.rfind("vqvae.", 0) == 0 || k.rfind("data.", 0) == 0 || k.rfind("split.", 0) == 0 || k == "codebook_size" ||
         k == "window" || k == "vq_length" || k == "sequence_length" || k == "stride";
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

VqBundle load_vq_bundle(const std::filesystem::path& path) {
  Checkpoint c = load_checkpoint(path);
  check_kind(c, kVqKind, path);
  try {
    const ExperimentConfig config = ExperimentConfig::from_json(c.metadata.at("config"));
    VqBundle b{config, standardization_from_json(c.metadata.at("standardization")), VqVae(config.vqvae, config.seed)};
    b.model.params().assign_from(c.params);
    b.epochs_done = c.metadata.at("epochs_done").get<std::size_t>();
    b.history = c.metadata.at("history");
    b.adam = std::move(c.adam);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ListenerBundle load_listener_bundle(const std::filesystem::path& path) {
  Checkpoint c = load_checkpoint(path);
  check_kind(c, kListenerKind, path);
  try {
    const ExperimentConfig config = ExperimentConfig::from_json(c.metadata.at("config"));
    ListenerBundle b{config, ListenerModel(config.speaker, config.predictor, config.seed)};
    b.model.params().assign_from(c.params);
    b.epochs_done = c.metadata.at("epochs_done").get<std::size_t>();
    b.history = c.metadata.at("history");
    b.initial_ce = c.metadata.at("initial_ce").get<double>();
    b.adam = std::move(c.adam);
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TrainOutcome run_train_vqvae(const ExperimentConfig& config, const DyadDataset& dataset,
                             const std::filesystem::path& checkpoint, bool resume, std::ostream* log) {
  config.validate();
  check_data_dims(config, dataset);
  const DataSplits splits = split_windows(dataset.samples, config.sequence_length, config.split);
  if (splits.train.empty()) throw EmptyInput("train-vqvae: no training windows");
  Standardization stdz = Standardization::fit(splits.train);
  const auto train = listener_windows(standardize(splits.train, stdz), config.vq_length, config.stride);
  const auto val = listener_windows(standardize(splits.val, stdz), config.vq_length, config.vq_length);

  VqVae model(config.vqvae, config.seed);
  AdamState adam;
  std::size_t start = 0;
  nlohmann::json history = nlohmann::json::array();
  if (resume && std::filesystem::exists(checkpoint)) {
    VqBundle prev = load_vq_bundle(checkpoint);
    check_same(config, prev.config, "resume", any_key);
    model.params().assign_from(prev.model.params());
    if (prev.adam) adam = *prev.adam;
    start = prev.epochs_done;
    history = prev.history;
    stdz = prev.standardization;
    log_line(log, "resuming at epoch " + std::to_string(start));
  }

  auto save = [&](std::size_t done) {
    nlohmann::json meta = checkpoint_meta(kVqKind, config, done, history);
    meta["standardization"] = to_json(stdz);
    save_checkpoint(checkpoint, model.params(), meta, &adam, adam.step);
  };
  VqTrainConfig tc = config.vq_train;
  tc.seed = config.seed;
  VqTrainHooks hooks;
  hooks.start_epoch = start;
  hooks.on_epoch = [&](std::size_t epoch, const VqEpochStats& s, const AdamState&) {
    history.push_back({{"epoch", epoch},
                       {"total", s.total},
                       {"reconstruction", s.reconstruction},
                       {"codebook", s.codebook},
                       {"commitment", s.commitment}});
    save(epoch + 1);
    log_line(log, "epoch " + std::to_string(epoch) + " loss " + fixed(s.total) + " rec " + fixed(s.reconstruction));
  };
  VqTrainReport report;
  if (start < tc.epochs) {
    report = train_vqvae(model, train, val, tc, adam, hooks);
  } else {
    save(start);
    std::vector<int> tokens;
    for (const auto& w : train) {
      const auto t = model.tokenize(w);
      tokens.insert(tokens.end(), t.begin(), t.end());
    }
    report.usage = codebook_usage(tokens, config.vqvae.codebook_size);
    report.heldout_l2 = val.empty() ? 0.0 : reconstruction_l2(model, val);
  }
  const auto used = static_cast<std::size_t>(
      std::count_if(report.usage.begin(), report.usage.end(), [](std::size_t u) { return u > 0; }));
  TrainOutcome out;
  out.report = {{"kind", kVqKind},
                {"config", config.to_json()},
                {"train_windows", train.size()},
                {"val_windows", val.size()},
                {"epochs", history},
                {"usage", report.usage},
                {"codes_used", used},
                {"heldout_l2", report.heldout_l2}};
  return out;
}

TrainOutcome run_train_predictor(const ExperimentConfig& config, const DyadDataset& dataset,
                                 const std::filesystem::path& vq_checkpoint, const std::filesystem::path& checkpoint,
                                 bool resume, std::ostream* log) {
  config.validate();
  check_data_dims(config, dataset);
  VqBundle vq = load_vq_bundle(vq_checkpoint);
  check_same(config, vq.config, "VQ-VAE checkpoint", vq_key);
  vq.model.freeze();
  const DataSplits splits = split_windows(dataset.samples, config.sequence_length, config.split);
  if (splits.train.empty()) throw EmptyInput("train-predictor: no training windows");
  const auto train = standardize(splits.train, vq.standardization);
  const auto val = standardize(splits.val, vq.standardization);

  ListenerModel model(config.speaker, config.predictor, config.seed);
  AdamState adam;
  std::size_t start = 0;
  nlohmann::json history = nlohmann::json::array();
  std::optional<double> initial_ce;
  if (resume && std::filesystem::exists(checkpoint)) {
    ListenerBundle prev = load_listener_bundle(checkpoint);
    check_same(config, prev.config, "resume", any_key);
    model.params().assign_from(prev.model.params());
    if (prev.adam) adam = *prev.adam;
    start = prev.epochs_done;
    history = prev.history;
    initial_ce = prev.initial_ce;
    log_line(log, "resuming at epoch " + std::to_string(start));
  }

  PredictorTrainConfig tc = config.predictor_train;
  tc.seed = config.seed;
  if (start > tc.epochs) tc.epochs = start;
  auto save = [&](std::size_t done, double ce) {
    nlohmann::json meta = checkpoint_meta(kListenerKind, config, done, history);
    meta["initial_ce"] = ce;
    save_checkpoint(checkpoint, model.params(), meta, &adam, adam.step);
  };
  // initial_ce is only known once train_predictor has evaluated it.
  double first_ce = initial_ce.value_or(0.0);
  PredictorTrainHooks hooks;
  hooks.start_epoch = start;
  hooks.on_epoch = [&](std::size_t epoch, const PredictorEpochStats& s, const AdamState&) {
    history.push_back({{"epoch", epoch},
                       {"loss", s.loss},
                       {"next_token_ce", s.next_token_ce},
                       {"train_accuracy", s.train_accuracy},
                       {"heldout_accuracy", s.heldout_accuracy}});
    save(epoch + 1, first_ce);
    log_line(log, "epoch " + std::to_string(epoch) + " loss " + fixed(s.loss) + " acc " + fixed(s.train_accuracy) +
                      " val " + fixed(s.heldout_accuracy));
  };
  if (!initial_ce) {
    const std::vector<TokenizedDyad> toks = [&] {
      std::vector<TokenizedDyad> t;
      for (const auto& d : train) t.push_back(tokenize_dyad(vq.model, d));
      return t;
    }();
    first_ce = next_token_cross_entropy(model, toks);
  }
  train_predictor(model, vq.model, train, val, tc, adam, hooks);
  if (start >= tc.epochs) save(start, first_ce);

  std::vector<TokenizedDyad> val_tokens;
  for (const auto& d : val) val_tokens.push_back(tokenize_dyad(vq.model, d));
  TrainOutcome out;
  out.report = {{"kind", kListenerKind},
                {"config", config.to_json()},
                {"train_windows", train.size()},
                {"val_windows", val.size()},
                {"initial_ce", first_ce},
                {"epochs", history}};
  if (!val_tokens.empty()) {
    out.report["heldout_accuracy"] = next_token_accuracy(model, val_tokens);
    out.report["heldout_accuracy_no_speaker"] = next_token_accuracy(model, val_tokens, {true, true});
  }
  return out;
}

std::vector<DyadSample> generate_listeners(const VqBundle& vq, const ListenerBundle& listener,
                                           const std::vector<DyadSample>& speakers, const GenerateOptions& options) {
  if (options.samples == 0) throw ContractError("generate: samples must be >= 1");
  const double p = options.nucleus_p.value_or(listener.config.nucleus_p);
  const Rng root(options.seed);
  std::vector<DyadSample> out;
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    const DyadSample& src = speakers[s];
    const std::size_t frames = options.frames.value_or(src.length() / kTokenWindow * kTokenWindow);
    if (frames == 0 || frames % kTokenWindow != 0) {
      throw ConfigError("generate: frames must be a positive multiple of " + std::to_string(kTokenWindow));
    }
    if (frames > src.length()) {
      throw RangeError("generate: horizon of " + std::to_string(frames) + " frames exceeds speaker '" + src.id +
                       "' of " + std::to_string(src.length()));
    }
    DyadSample std_src = src;
    std_src.speaker_motion = vq.standardization.apply(src.speaker_motion);
    const SpeakerStreams streams = speaker_streams(std_src);
    const DyadSample clipped = window(src, 0, frames);
    for (std::size_t i = 0; i < options.samples; ++i) {
      Rng rng = root.split(s).split(i);
      DyadSample g = clipped;
      g.listener_motion = vq.standardization.invert(
          rollout(listener.model, vq.model, streams, frames / kTokenWindow, p, rng));
      g.id = src.id + "-generated" + (options.samples > 1 ? "-" + std::to_string(i) : "");
      out.push_back(std::move(g));
    }
  }
  return out;
}

const std::vector<std::string>& model_method_names() {
  static const std::vector<std::string> names{"ours", "gt"};
  return names;
}

namespace {

nlohmann::json stream_json(const metrics::StreamMetrics& m) {
  nlohmann::json j = {{"l2", m.l2}, {"fd", m.fd}, {"variation", m.variation}, {"si", m.si}, {"p_fd", m.p_fd}};
  j["pcc"] = m.pcc ? nlohmann::json(*m.pcc) : nlohmann::json(nullptr);
  j["tlcc_peak_lag"] = m.tlcc_peak_lag ? nlohmann::json(*m.tlcc_peak_lag) : nlohmann::json(nullptr);
  return j;
}

std::string cell(double v) { return fixed(v, 3); }
std::string cell(const std::optional<double>& v) { return v ? fixed(*v, 3) : "-"; }

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

}  // namespace

nlohmann::json EvaluationResult::to_json(const ExperimentConfig& config) const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"method", r.method},
                         {"sample_count", r.sample_count},
                         {"expression", stream_json(r.expression)},
                         {"rotation", stream_json(r.rotation)}});
  }
  nlohmann::json j = {{"config", config.to_json()}, {"methods", rows_json}};
  j["notes"] = {"nn_audio searches per-bin mean and std of the audio features (no pretrained audio network)",
                "fd and p_fd are squared Frechet distances",
                "multi_sample_min_l2 is measured in standardised units"};
  if (!multi_sample_curve.empty()) j["multi_sample_min_l2"] = multi_sample_curve;
  return j;
}

std::string EvaluationResult::to_text() const {
  std::size_t w0 = 6;
  for (const auto& r : rows) w0 = std::max(w0, r.method.size());
  const std::vector<std::string> cols{"L2", "FD", "Var", "SI", "P-FD", "PCC", "TLCC"};
  std::string out = pad("", w0) + " |" + pad("expression", 10 * 7) + " |" + pad("rotation", 10 * 7) + "\n";
  out += pad("method", w0) + " |";
  for (int half = 0; half < 2; ++half) {
    for (const auto& c : cols) out += pad(c, 10);
    out += half == 0 ? " |" : "\n";
  }
  for (const auto& r : rows) {
    out += pad(r.method, w0) + " |";
    for (const auto* m : {&r.expression, &r.rotation}) {
      for (const auto& v : {cell(m->l2), cell(m->fd), cell(m->variation), cell(m->si), cell(m->p_fd), cell(m->pcc),
                            cell(m->tlcc_peak_lag)}) {
        out += pad(v, 10);
      }
      out += m == &r.expression ? " |" : "\n";
    }
  }
  if (!multi_sample_curve.empty()) {
    out += "best-of-x L2:";
    for (double v : multi_sample_curve) out += " " + fixed(v, 4);
    out += "\n";
  }
  return out;
}

EvaluationResult run_evaluate(const ExperimentConfig& config, const EvaluateRequest& request) {
  config.validate();
  for (const auto& m : request.methods) {
    const auto& extra = model_method_names();
    if (!is_baseline(m) && std::find(extra.begin(), extra.end(), m) == extra.end()) {
      std::string valid;
      for (const auto& n : baseline_names()) valid += n + ", ";
      valid += "ours, gt";
      throw ConfigError("unknown method '" + m + "' (valid: " + valid + ")");
    }
  }
  const std::size_t len = config.sequence_length;
  const std::vector<DyadSample> gt = select_split(request.ground_truth, len, {1.0, 0.0, 0.0}, SplitPart::All);
  if (gt.empty()) throw EmptyInput("evaluate: no ground-truth windows of " + std::to_string(len) + " frames");
  const TrainBank bank = TrainBank::build(request.train_bank, len);

  std::vector<MotionSequence> gt_listeners, speakers;
  for (const auto& w : gt) {
    gt_listeners.push_back(w.listener_motion);
    speakers.push_back(w.speaker_motion);
  }
  std::vector<MotionSequence> bank_listeners;
  for (std::size_t i = 0; i < bank.size(); ++i) bank_listeners.push_back(bank.entry(i).listener_motion);
  const auto& cluster_source = bank_listeners.empty() ? gt_listeners : bank_listeners;
  metrics::EvaluationContext ctx;
  ctx.expression_clusters = metrics::fit_stream_clusters(cluster_source, metrics::Stream::Expression,
                                                         config.metrics.expression_clusters, config.metrics.cluster_seed);
  ctx.rotation_clusters = metrics::fit_stream_clusters(cluster_source, metrics::Stream::Rotation,
                                                       config.metrics.rotation_clusters, config.metrics.cluster_seed);
  ctx.projection.smile_weights = config.metrics.smile_weights;
  ctx.max_lag = config.metrics.max_lag;

  BaselineContext bctx;
  bctx.bank = bank.empty() ? nullptr : &bank;
  bctx.vqvae = request.vq ? &request.vq->model : nullptr;

  EvaluationResult result;
  const Rng root(request.seed);
  for (const auto& method : request.methods) {
    std::vector<MotionSequence> pred;
    if (method == "gt") {
      pred = gt_listeners;
    } else if (method == "ours") {
      if (request.predictions.empty()) throw ConfigError("method 'ours' needs generated predictions");
      // Window k of source id X pairs with window k of "X-generated[-0]".
      std::map<std::string, std::vector<const DyadSample*>> by_id;
      const auto pred_windows = select_split(request.predictions, len, {1.0, 0.0, 0.0}, SplitPart::All);
      for (const auto& p : pred_windows) by_id[p.id].push_back(&p);
      std::map<std::string, std::size_t> seen;
      for (const auto& w : gt) {
        const std::size_t k = seen[w.id]++;
        const DyadSample* match = nullptr;
        for (const std::string& key : {w.id + "-generated", w.id + "-generated-0"}) {
          const auto it = by_id.find(key);
          if (it != by_id.end() && k < it->second.size()) match = it->second[k];
        }
        if (!match) throw FormatError("evaluate: no generated window " + std::to_string(k) + " for '" + w.id + "'");
        pred.push_back(match->listener_motion);
      }
    } else {
      Rng method_rng = root.split(method);
      for (std::size_t i = 0; i < gt.size(); ++i) {
        Rng rng = method_rng.split(i);
        MotionSequence out = run_baseline(method, bctx, gt[i], rng);
        if (method == "codebook_random_walk") out = request.vq->standardization.invert(out);
        pred.push_back(std::move(out));
      }
    }
    result.rows.push_back(metrics::evaluate(method, pred, gt_listeners, speakers, ctx));
  }

  if (request.multi_sample > 0) {
    if (!request.vq || !request.listener) throw ConfigError("multi-sample curve needs both model checkpoints");
    std::vector<SpeakerStreams> streams;
    std::vector<MotionSequence> truth;
    for (const auto& w : gt) {
      DyadSample s = w;
      s.speaker_motion = request.vq->standardization.apply(w.speaker_motion);
      streams.push_back(speaker_streams(s));
      truth.push_back(request.vq->standardization.apply(w.listener_motion));
    }
    result.multi_sample_curve =
        multi_sample_min_l2(request.listener->model, request.vq->model, streams, truth, len / kTokenWindow,
                            request.multi_sample, request.listener->config.nucleus_p, request.seed);
  }
  return result;
}

}  // namespace dyad
