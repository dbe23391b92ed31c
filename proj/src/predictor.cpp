// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyad/errors.hpp"

namespace dyad {

using ad::Tensor;

nlohmann::json PredictorConfig::to_json() const {
  return {{"codebook_size", codebook_size}, {"model_dim", model_dim}, {"heads", heads},
          {"layers", layers},               {"ffn_dim", ffn_dim},     {"tokens", tokens},
          {"outputs", outputs},             {"aux_weight", aux_weight}};
}

PredictorConfig PredictorConfig::from_json(const nlohmann::json& j) {
  try {
    PredictorConfig c;
    c.codebook_size = j.at("codebook_size");
    c.model_dim = j.at("model_dim");
    c.heads = j.at("heads");
    c.layers = j.at("layers");
    c.ffn_dim = j.at("ffn_dim");
    c.tokens = j.at("tokens");
    c.outputs = j.at("outputs");
    c.aux_weight = j.at("aux_weight");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("predictor config: ") + e.what());
  }
}

ListenerModel::ListenerModel(const SpeakerConfig& speaker, const PredictorConfig& config, std::uint64_t seed)
    : config_(config), store_(seed) {
  if (config.codebook_size == 0) throw ConfigError("predictor: codebook_size must be positive");
  if (config.tokens != speaker.tokens) {
    throw ConfigError("predictor sees " + std::to_string(config.tokens) + " past tokens, speaker encoder is sized for " +
                      std::to_string(speaker.tokens));
  }
  const std::size_t seq = speaker.output_steps() + config.tokens;
  if (config.outputs == 0 || config.outputs > seq) {
    throw ConfigError("predictor: " + std::to_string(config.outputs) + " outputs from a sequence of " +
                      std::to_string(seq));
  }
  Rng rng = Rng(seed).split("listener-model");
  speaker_ = SpeakerEncoder::create(store_, "speaker", speaker, rng);
  const std::size_t d = config.model_dim;
  speaker_in_ = nn::Linear::create(store_, "predictor.speaker_in", speaker.model_dim, d, rng);
  std::vector<float> table(config.codebook_size * d);
  for (float& v : table) v = static_cast<float>(rng.normal());
  token_table_ = store_.add("predictor.tokens", Tensor::from({config.codebook_size, d}, std::move(table), true));
  std::vector<float> seg(2 * d);
  for (float& v : seg) v = static_cast<float>(0.02 * rng.normal());
  segment_table_ = store_.add("predictor.segments", Tensor::from({2, d}, std::move(seg), true));
  pos_ = nn::PositionalEmbedding::create(store_, "predictor.pos", seq, d, rng);
  for (std::size_t i = 0; i < config.layers; ++i) {
    blocks_.push_back(
        nn::TransformerBlock::create(store_, "predictor.block" + std::to_string(i), d, config.heads, config.ffn_dim, rng));
  }
  norm_ = nn::LayerNorm::create(store_, "predictor.norm", d);
  head_ = nn::Linear::create(store_, "predictor.head", d, config.codebook_size, rng);
  // Near-uniform initial distribution.
  for (float& w : head_.weight.data()) w *= 0.1f;
}

nlohmann::json ListenerModel::to_json() const {
  return {{"speaker", speaker_config().to_json()}, {"predictor", config_.to_json()}};
}

ListenerModel ListenerModel::from_json(const nlohmann::json& j, std::uint64_t seed) {
  if (!j.contains("speaker") || !j.contains("predictor")) throw FormatError("listener model config incomplete");
  return ListenerModel(SpeakerConfig::from_json(j["speaker"]), PredictorConfig::from_json(j["predictor"]), seed);
}

Tensor ListenerModel::logits(const Tensor& speaker_motion, const Tensor& speaker_audio, std::span<const int> past,
                             std::span<const std::uint8_t> visible) const {
  const std::size_t b = speaker_motion.dim(0), tau = config_.tokens, d = config_.model_dim;
  if (past.size() != b * tau || visible.size() != b * tau) {
    throw ShapeError("predictor: " + std::to_string(past.size()) + " past tokens and " +
                     std::to_string(visible.size()) + " mask entries for " + std::to_string(b) + "x" +
                     std::to_string(tau));
  }
  std::vector<int> idx(past.size());
  std::vector<float> keep(past.size() * d);
  for (std::size_t i = 0; i < past.size(); ++i) {
    if (!visible[i]) continue;
    if (past[i] < 0 || static_cast<std::size_t>(past[i]) >= config_.codebook_size) {
      throw RangeError("predictor: token " + std::to_string(past[i]) + " outside [0, " +
                       std::to_string(config_.codebook_size) + ")");
    }
    idx[i] = past[i];
    std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(i * d), d, 1.0f);
  }

  const Tensor s_enc = speaker_(speaker_motion, speaker_audio);
  const std::size_t s_len = s_enc.dim(1);
  const Tensor seg_speaker = ad::reshape(ad::slice(segment_table_, 0, 0, 1), {d});
  const Tensor seg_listener = ad::reshape(ad::slice(segment_table_, 0, 1, 1), {d});
  const Tensor s = ad::add(speaker_in_(s_enc), seg_speaker);
  Tensor l = ad::mul(ad::embedding(token_table_, idx, {b, tau}), Tensor::from({b, tau, d}, std::move(keep)));
  l = ad::add(l, seg_listener);
  Tensor h = pos_(ad::concat({s, l}, 1));

  nn::KeyMask mask(b * (s_len + tau), 1);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < tau; ++j) mask[r * (s_len + tau) + s_len + j] = visible[r * tau + j];
  }
  for (const auto& block : blocks_) h = block(h, &mask);
  return head_(ad::slice(norm_(h), 1, 0, config_.outputs));
}

SpeakerStreams speaker_streams(const DyadSample& sample) {
  SpeakerStreams s;
  s.motion = sample.speaker_motion;
  s.audio = pool_audio(sample.speaker_audio, sample.length());
  s.audio_dim = sample.speaker_audio.feature_dim;
  return s;
}

TokenizedDyad tokenize_dyad(const VqVae& vqvae, const DyadSample& sample) {
  const std::size_t frames = sample.length() / kTokenWindow * kTokenWindow;
  if (frames == 0) throw ShapeError("tokenize_dyad: '" + sample.id + "' is shorter than one token window");
  TokenizedDyad t;
  t.speaker = speaker_streams(sample);
  t.listener_tokens = vqvae.tokenize(sample.listener_motion.slice(0, frames));
  return t;
}

void speaker_window(const SpeakerStreams& speaker, std::size_t step, std::size_t tokens, std::vector<float>& motion,
                    std::vector<float>& audio) {
  const std::size_t end = (step + 1) * kTokenWindow, ctx = (tokens + 1) * kTokenWindow;
  if (end > speaker.length()) {
    throw RangeError("speaker context for step " + std::to_string(step) + " needs " + std::to_string(end) +
                     " frames, have " + std::to_string(speaker.length()));
  }
  const std::size_t da = speaker.audio_dim;
  for (std::size_t j = 0; j < ctx; ++j) {
    const std::ptrdiff_t f = static_cast<std::ptrdiff_t>(end) - static_cast<std::ptrdiff_t>(ctx) +
                             static_cast<std::ptrdiff_t>(j);
    const std::size_t src = f < 0 ? 0 : static_cast<std::size_t>(f);
    const auto row = speaker.motion.row(src);
    motion.insert(motion.end(), row.begin(), row.end());
    audio.insert(audio.end(), speaker.audio.begin() + static_cast<std::ptrdiff_t>(src * da),
                 speaker.audio.begin() + static_cast<std::ptrdiff_t>((src + 1) * da));
  }
}

namespace {

struct Item {
  std::size_t dyad;
  std::size_t step;
};

struct Batch {
  Tensor motion, audio;
  std::vector<int> past;
  std::vector<std::uint8_t> visible;
  std::vector<int> next;  // [B]
  std::vector<int> aux;   // [B * (outputs - 1)]
};

// History for `step` from `tokens`; positions before the start are hidden.
void history(std::span<const int> tokens, std::size_t step, std::size_t tau, std::vector<int>& past,
             std::vector<std::uint8_t>& visible) {
  for (std::size_t j = 0; j < tau; ++j) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(step) - static_cast<std::ptrdiff_t>(tau) +
                               static_cast<std::ptrdiff_t>(j);
    const bool ok = idx >= 0;
    past.push_back(ok ? tokens[static_cast<std::size_t>(idx)] : -1);
    visible.push_back(ok ? 1 : 0);
  }
}

Batch make_batch(const ListenerModel& model, const std::vector<TokenizedDyad>& dyads, std::span<const Item> items,
                 Rng* mask_rng, double mask_prob, SpeakerDropout dropout) {
  const auto& cfg = model.config();
  const std::size_t tau = cfg.tokens, ctx = model.speaker_config().context_frames();
  const std::size_t cm = model.speaker_config().motion_dim, da = model.speaker_config().audio_dim;
  Batch b;
  std::vector<float> motion, audio;
  motion.reserve(items.size() * ctx * cm);
  audio.reserve(items.size() * ctx * da);
  for (const Item& it : items) {
    const TokenizedDyad& d = dyads[it.dyad];
    speaker_window(d.speaker, it.step, tau, motion, audio);
    const std::size_t base = b.visible.size();
    history(d.listener_tokens, it.step, tau, b.past, b.visible);
    if (mask_rng && mask_rng->uniform() < mask_prob) {
      const std::size_t u = mask_rng->below(tau + 1);
      for (std::size_t j = 0; j < u; ++j) b.visible[base + j] = 0;
    }
    const std::size_t n = d.listener_tokens.size();
    for (std::size_t o = 0; o < cfg.outputs; ++o) {
      const std::size_t idx = it.step + o;
      const int target = idx < n ? d.listener_tokens[idx] : -1;
      (o == 0 ? b.next : b.aux).push_back(target);
    }
  }
  if (motion.size() != items.size() * ctx * cm || audio.size() != items.size() * ctx * da) {
    throw ShapeError("predictor batch: speaker streams do not match the model's " + std::to_string(cm) + " motion / " +
                     std::to_string(da) + " audio channels");
  }
  if (dropout.motion) std::fill(motion.begin(), motion.end(), 0.0f);
  if (dropout.audio) std::fill(audio.begin(), audio.end(), 0.0f);
  b.motion = Tensor::from({items.size(), ctx, cm}, std::move(motion));
  b.audio = Tensor::from({items.size(), ctx, da}, std::move(audio));
  return b;
}

std::vector<Item> all_items(const std::vector<TokenizedDyad>& dyads) {
  std::vector<Item> items;
  for (std::size_t d = 0; d < dyads.size(); ++d) {
    for (std::size_t s = 0; s < dyads[d].listener_tokens.size(); ++s) items.push_back({d, s});
  }
  return items;
}

std::vector<TokenizedDyad> tokenize_all(const VqVae& vqvae, const std::vector<DyadSample>& samples) {
  std::vector<TokenizedDyad> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(tokenize_dyad(vqvae, s));
  return out;
}

constexpr std::size_t kEvalBatch = 64;

}  // namespace

std::vector<double> predict_dist(const ListenerModel& model, const SpeakerStreams& speaker, std::size_t step,
                                 std::span<const int> past, std::span<const std::uint8_t> visible,
                                 SpeakerDropout dropout) {
  const std::size_t ctx = model.speaker_config().context_frames();
  std::vector<float> motion, audio;
  speaker_window(speaker, step, model.config().tokens, motion, audio);
  if (dropout.motion) std::fill(motion.begin(), motion.end(), 0.0f);
  if (dropout.audio) std::fill(audio.begin(), audio.end(), 0.0f);
  ad::NoGradGuard guard;
  const Tensor logits =
      model.logits(Tensor::from({1, ctx, speaker.motion.channels()}, std::move(motion)),
                   Tensor::from({1, ctx, speaker.audio_dim}, std::move(audio)), past, visible);
  const std::size_t k = model.config().codebook_size;
  const auto row = logits.data().subspan(0, k);
  const double mx = *std::max_element(row.begin(), row.end());
  std::vector<double> p(k);
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) z += p[j] = std::exp(static_cast<double>(row[j]) - mx);
  for (double& v : p) v /= z;
  return p;
}

std::vector<std::size_t> nucleus_set(std::span<const double> dist, double p) {
  if (!(p > 0.0) || p > 1.0) throw ContractError("nucleus p must be in (0, 1], got " + std::to_string(p));
  if (dist.empty()) throw EmptyInput("nucleus: empty distribution");
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
  double total = 0.0;
  for (double v : dist) total += v;
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += dist[order[keep++]];
    if (mass >= p * total * (1.0 - 1e-12)) break;
  }
  order.resize(keep);
  return order;
}

std::size_t nucleus_sample(std::span<const double> dist, double p, Rng& rng) {
  const auto set = nucleus_set(dist, p);
  double mass = 0.0;
  for (std::size_t i : set) mass += dist[i];
  double u = rng.uniform() * mass;
  for (std::size_t i : set) {
    u -= dist[i];
    if (u < 0.0) return i;
  }
  return set.back();
}

PredictorTrainReport train_predictor(ListenerModel& model, const VqVae& vqvae, const std::vector<DyadSample>& train,
                                     const std::vector<DyadSample>& heldout, const PredictorTrainConfig& config,
                                     AdamState& adam, const PredictorTrainHooks& hooks) {
  if (!vqvae.frozen()) throw ContractError("train_predictor: the VQ-VAE must be frozen first");
  if (train.empty()) throw EmptyInput("train_predictor: empty dataset");
  if (config.batch_size == 0) throw ConfigError("train_predictor: batch_size must be positive");
  if (vqvae.config().codebook_size != model.config().codebook_size) {
    throw ConfigError("predictor has " + std::to_string(model.config().codebook_size) + " classes, codebook has " +
                      std::to_string(vqvae.config().codebook_size));
  }
  const auto train_dyads = tokenize_all(vqvae, train);
  const auto held_dyads = tokenize_all(vqvae, heldout);
  std::vector<Item> items = all_items(train_dyads);
  if (items.empty()) throw EmptyInput("train_predictor: no token positions");

  PredictorTrainReport report;
  report.initial_ce = next_token_cross_entropy(model, train_dyads);
  const Rng root(config.seed);
  const auto& cfg = model.config();
  for (std::size_t epoch = hooks.start_epoch; epoch < config.epochs; ++epoch) {
    Rng shuffle = root.split("shuffle").split(epoch);
    Rng mask_rng = root.split("mask").split(epoch);
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      return a.dyad != b.dyad ? a.dyad < b.dyad : a.step < b.step;
    });
    std::shuffle(items.begin(), items.end(), shuffle);
    PredictorEpochStats stats;
    std::size_t batches = 0, correct = 0;
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
      const std::span<const Item> chunk(items.data() + start, std::min(config.batch_size, items.size() - start));
      const Batch b = make_batch(model, train_dyads, chunk, &mask_rng, config.mask_prob, {});
      const Tensor logits = model.logits(b.motion, b.audio, b.past, b.visible);
      const std::size_t bs = chunk.size(), k = cfg.codebook_size;
      const Tensor first = ad::reshape(ad::slice(logits, 1, 0, 1), {bs, k});
      const Tensor ce = ad::cross_entropy(first, b.next);
      Tensor loss = ce;
      const bool has_aux = cfg.outputs > 1 && std::any_of(b.aux.begin(), b.aux.end(), [](int t) { return t >= 0; });
      if (has_aux && cfg.aux_weight > 0.0f) {
        const Tensor rest = ad::reshape(ad::slice(logits, 1, 1, cfg.outputs - 1), {bs * (cfg.outputs - 1), k});
        loss = ad::add(loss, ad::scale(ad::cross_entropy(rest, b.aux), cfg.aux_weight));
      }
      if (!std::isfinite(loss.item())) {
        throw NumericalError("train_predictor: non-finite loss at epoch " + std::to_string(epoch));
      }
      for (std::size_t r = 0; r < bs; ++r) {
        const auto row = first.data().subspan(r * k, k);
        const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        correct += arg == b.next[r];
      }
      model.params().zero_grad();
      ad::backward(loss);
      adam_step(model.params(), adam, noam_lr(adam.step + 1, config.base_lr, config.warmup, cfg.model_dim));
      stats.loss += loss.item();
      stats.next_token_ce += ce.item();
      ++batches;
    }
    stats.loss /= static_cast<double>(batches);
    stats.next_token_ce /= static_cast<double>(batches);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(items.size());
    if (!held_dyads.empty()) stats.heldout_accuracy = next_token_accuracy(model, held_dyads);
    report.epochs.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(epoch, stats, adam);
  }
  return report;
}

double next_token_accuracy(const ListenerModel& model, const std::vector<TokenizedDyad>& dyads,
                           SpeakerDropout dropout) {
  const std::vector<Item> items = all_items(dyads);
  if (items.empty()) throw EmptyInput("next_token_accuracy: no token positions");
  ad::NoGradGuard guard;
  const std::size_t k = model.config().codebook_size, o = model.config().outputs;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < items.size(); start += kEvalBatch) {
    const std::span<const Item> chunk(items.data() + start, std::min(kEvalBatch, items.size() - start));
    const Batch b = make_batch(model, dyads, chunk, nullptr, 0.0, dropout);
    const Tensor logits = model.logits(b.motion, b.audio, b.past, b.visible);
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const auto row = logits.data().subspan(r * o * k, k);
      correct += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == b.next[r];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

double next_token_cross_entropy(const ListenerModel& model, const std::vector<TokenizedDyad>& dyads) {
  const std::vector<Item> items = all_items(dyads);
  if (items.empty()) throw EmptyInput("next_token_cross_entropy: no token positions");
  ad::NoGradGuard guard;
  const std::size_t k = model.config().codebook_size;
  double total = 0.0;
  for (std::size_t start = 0; start < items.size(); start += kEvalBatch) {
    const std::span<const Item> chunk(items.data() + start, std::min(kEvalBatch, items.size() - start));
    const Batch b = make_batch(model, dyads, chunk, nullptr, 0.0, {});
    const Tensor logits = model.logits(b.motion, b.audio, b.past, b.visible);
    const Tensor first = ad::reshape(ad::slice(logits, 1, 0, 1), {chunk.size(), k});
    total += static_cast<double>(ad::cross_entropy(first, b.next).item()) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(items.size());
}

std::vector<int> rollout_tokens(const ListenerModel& model, const SpeakerStreams& speaker, std::size_t steps,
                                double p, Rng& rng) {
  if (steps == 0) throw ContractError("rollout: zero steps");
  if (steps * kTokenWindow > speaker.length()) {
    throw RangeError("rollout of " + std::to_string(steps) + " steps needs " + std::to_string(steps * kTokenWindow) +
                     " speaker frames, have " + std::to_string(speaker.length()));
  }
  std::vector<int> tokens;
  const std::size_t tau = model.config().tokens;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<int> past;
    std::vector<std::uint8_t> visible;
    history(tokens, step, tau, past, visible);
    const auto dist = predict_dist(model, speaker, step, past, visible);
    tokens.push_back(static_cast<int>(nucleus_sample(dist, p, rng)));
  }
  return tokens;
}

MotionSequence rollout(const ListenerModel& model, const VqVae& vqvae, const SpeakerStreams& speaker,
                       std::size_t steps, double p, Rng& rng) {
  const auto tokens = rollout_tokens(model, speaker, steps, p, rng);
  MotionSequence out = vqvae.detokenize(tokens);
  MotionSequence seq(out.expression_dim(), speaker.motion.fps());
  seq.values() = std::move(out.values());
  return seq;
}

std::vector<double> multi_sample_min_l2(const ListenerModel& model, const VqVae& vqvae,
                                        const std::vector<SpeakerStreams>& speakers,
                                        const std::vector<MotionSequence>& truth, std::size_t steps,
                                        std::size_t n_samples, double p, std::uint64_t seed) {
  if (n_samples == 0) throw ContractError("multi_sample_min_l2: n_samples must be >= 1");
  if (speakers.empty()) throw EmptyInput("multi_sample_min_l2: no speakers");
  if (speakers.size() != truth.size()) {
    throw ShapeError("multi_sample_min_l2: " + std::to_string(speakers.size()) + " speakers vs " +
                     std::to_string(truth.size()) + " ground-truth listeners");
  }
  const std::size_t frames = steps * kTokenWindow;
  std::vector<double> curve(n_samples, 0.0);
  const Rng root(seed);
  for (std::size_t s = 0; s < speakers.size(); ++s) {
    const MotionSequence gt = truth[s].slice(0, frames);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_samples; ++i) {
      Rng rng = root.split(s).split(i);
      const MotionSequence pred = rollout(model, vqvae, speakers[s], steps, p, rng);
      double l2 = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        double d = 0.0;
        for (std::size_t c = 0; c < gt.channels(); ++c) {
          const double diff = static_cast<double>(pred.at(t, c)) - gt.at(t, c);
          d += diff * diff;
        }
        l2 += std::sqrt(d);
      }
      best = std::min(best, l2 / static_cast<double>(frames));
      curve[i] += best;
    }
  }
  for (double& v : curve) v /= static_cast<double>(speakers.size());
  return curve;
}

}  // namespace dyad
