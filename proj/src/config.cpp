// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dyad/errors.hpp"

namespace dyad {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field count_field(T ExperimentConfig::*group, std::size_t T::*member) {
  return {[=](const ExperimentConfig& c) { return std::to_string(c.*group.*member); },
          [=](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*group.*member = parse_count(k, v); }};
}

template <typename T, typename V>
Field real_field(T ExperimentConfig::*group, V T::*member) {
  return {[=](const ExperimentConfig& c) { return fmt(static_cast<double>(c.*group.*member)); },
          [=](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*group.*member = static_cast<V>(parse_real(k, v));
          }};
}

Field top_count(std::size_t ExperimentConfig::*member) {
  return {[=](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [=](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_count(k, v); }};
}

const std::map<std::string, Field>& fields() {
  using C = ExperimentConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["window"] = top_count(&C::window);
    f["sequence_length"] = top_count(&C::sequence_length);
    f["vq_length"] = top_count(&C::vq_length);
    f["stride"] = top_count(&C::stride);
    f["seed"] = {[](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& k, const std::string& v) { c.seed = parse_count(k, v); }};
    f["nucleus_p"] = {[](const C& c) { return fmt(c.nucleus_p); },
                      [](C& c, const std::string& k, const std::string& v) { c.nucleus_p = parse_real(k, v); }};
    // Past listener tokens seen by the predictor; sizes the speaker context too.
    f["context_tokens"] = {[](const C& c) { return std::to_string(c.predictor.tokens); },
                           [](C& c, const std::string& k, const std::string& v) {
                             c.predictor.tokens = c.speaker.tokens = parse_count(k, v);
                           }};
    f["codebook_size"] = {[](const C& c) { return std::to_string(c.vqvae.codebook_size); },
                          [](C& c, const std::string& k, const std::string& v) {
                            c.vqvae.codebook_size = c.predictor.codebook_size = parse_count(k, v);
                          }};
    f["data.expression_dim"] = {[](const C& c) { return std::to_string(c.vqvae.input_dim - 3); },
                                [](C& c, const std::string& k, const std::string& v) {
                                  c.set_feature_dims(parse_count(k, v), c.speaker.audio_dim);
                                }};
    f["data.audio_dim"] = {[](const C& c) { return std::to_string(c.speaker.audio_dim); },
                           [](C& c, const std::string& k, const std::string& v) {
                             c.speaker.audio_dim = parse_count(k, v);
                           }};

    f["vqvae.model_dim"] = count_field(&C::vqvae, &VqVaeConfig::model_dim);
    f["vqvae.heads"] = count_field(&C::vqvae, &VqVaeConfig::heads);
    f["vqvae.layers"] = count_field(&C::vqvae, &VqVaeConfig::layers);
    f["vqvae.ffn_dim"] = count_field(&C::vqvae, &VqVaeConfig::ffn_dim);
    f["vqvae.latent_dim"] = count_field(&C::vqvae, &VqVaeConfig::latent_dim);
    f["vqvae.commit_weight"] = real_field(&C::vqvae, &VqVaeConfig::commit_weight);
    f["vqvae.epochs"] = count_field(&C::vq_train, &VqTrainConfig::epochs);
    f["vqvae.batch_size"] = count_field(&C::vq_train, &VqTrainConfig::batch_size);
    f["vqvae.base_lr"] = real_field(&C::vq_train, &VqTrainConfig::base_lr);
    f["vqvae.warmup"] = {[](const C& c) { return std::to_string(c.vq_train.warmup); },
                         [](C& c, const std::string& k, const std::string& v) { c.vq_train.warmup = parse_count(k, v); }};
    f["vqvae.init"] = {[](const C& c) { return std::string(c.vq_train.init == CodebookInit::Latents ? "latents" : "gaussian"); },
                       [](C& c, const std::string& k, const std::string& v) {
                         if (v == "latents") c.vq_train.init = CodebookInit::Latents;
                         else if (v == "gaussian") c.vq_train.init = CodebookInit::Gaussian;
                         else throw ConfigError("config key '" + k + "': expected latents or gaussian, got '" + v + "'");
                       }};

    f["speaker.model_dim"] = count_field(&C::speaker, &SpeakerConfig::model_dim);
    f["speaker.heads"] = count_field(&C::speaker, &SpeakerConfig::heads);
    f["speaker.layers"] = count_field(&C::speaker, &SpeakerConfig::layers);
    f["speaker.ffn_dim"] = count_field(&C::speaker, &SpeakerConfig::ffn_dim);
    f["speaker.extra_step"] = {[](const C& c) { return std::string(c.speaker.extra_step ? "true" : "false"); },
                               [](C& c, const std::string& k, const std::string& v) {
                                 c.speaker.extra_step = parse_bool(k, v);
                               }};
    f["speaker.fusion"] = {[](const C& c) { return std::string(to_string(c.speaker.fusion)); },
                           [](C& c, const std::string&, const std::string& v) { c.speaker.fusion = parse_fusion(v); }};

    f["predictor.model_dim"] = count_field(&C::predictor, &PredictorConfig::model_dim);
    f["predictor.heads"] = count_field(&C::predictor, &PredictorConfig::heads);
    f["predictor.layers"] = count_field(&C::predictor, &PredictorConfig::layers);
    f["predictor.ffn_dim"] = count_field(&C::predictor, &PredictorConfig::ffn_dim);
    f["predictor.outputs"] = count_field(&C::predictor, &PredictorConfig::outputs);
    f["predictor.aux_weight"] = real_field(&C::predictor, &PredictorConfig::aux_weight);
    f["predictor.epochs"] = count_field(&C::predictor_train, &PredictorTrainConfig::epochs);
    f["predictor.batch_size"] = count_field(&C::predictor_train, &PredictorTrainConfig::batch_size);
    f["predictor.base_lr"] = real_field(&C::predictor_train, &PredictorTrainConfig::base_lr);
    f["predictor.warmup"] = {[](const C& c) { return std::to_string(c.predictor_train.warmup); },
                             [](C& c, const std::string& k, const std::string& v) {
                               c.predictor_train.warmup = parse_count(k, v);
                             }};
    f["predictor.mask_prob"] = real_field(&C::predictor_train, &PredictorTrainConfig::mask_prob);

    f["metrics.expression_clusters"] = count_field(&C::metrics, &MetricSettings::expression_clusters);
    f["metrics.rotation_clusters"] = count_field(&C::metrics, &MetricSettings::rotation_clusters);
    f["metrics.max_lag"] = count_field(&C::metrics, &MetricSettings::max_lag);
    f["metrics.cluster_seed"] = {[](const C& c) { return std::to_string(c.metrics.cluster_seed); },
                                 [](C& c, const std::string& k, const std::string& v) {
                                   c.metrics.cluster_seed = parse_count(k, v);
                                 }};
    f["metrics.smile_weights"] = {[](const C& c) {
                                    std::string s;
                                    for (std::size_t i = 0; i < c.metrics.smile_weights.size(); ++i) {
                                      s += (i ? "," : "") + fmt(c.metrics.smile_weights[i]);
                                    }
                                    return s;
                                  },
                                  [](C& c, const std::string& k, const std::string& v) {
                                    std::vector<double> w;
                                    std::stringstream ss(v);
                                    std::string item;
                                    while (std::getline(ss, item, ',')) w.push_back(parse_real(k, trim(item)));
                                    if (w.empty()) throw ConfigError("config key '" + k + "': empty weight list");
                                    c.metrics.smile_weights = std::move(w);
                                  }};

    f["split.train"] = real_field(&C::split, &SplitRatios::train);
    f["split.val"] = real_field(&C::split, &SplitRatios::val);
    f["split.test"] = real_field(&C::split, &SplitRatios::test);
    return f;
  }();
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.profile = "defaults";
  c.vqvae.model_dim = 512;
  c.vqvae.heads = 8;
  c.vqvae.layers = 12;
  c.vqvae.ffn_dim = 2048;
  c.vqvae.codebook_size = 200;
  c.vqvae.latent_dim = 256;
  c.vq_train.epochs = 1000;
  c.vq_train.batch_size = 32;
  c.vq_train.base_lr = 2.0;
  c.vq_train.warmup = 4000;
  c.speaker.model_dim = 1024;
  c.speaker.heads = 8;
  c.speaker.layers = 12;
  c.speaker.ffn_dim = 4096;
  c.predictor.codebook_size = 200;
  c.predictor.model_dim = 200;
  c.predictor.heads = 10;
  c.predictor.layers = 5;
  c.predictor.ffn_dim = 800;
  c.predictor_train.epochs = 1000;
  c.predictor_train.batch_size = 32;
  c.predictor_train.base_lr = 0.01;
  c.predictor_train.warmup = 4000;
  return c;
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c = defaults();
  c.profile = "desk";
  c.vqvae.model_dim = 64;
  c.vqvae.heads = 4;
  c.vqvae.layers = 2;
  c.vqvae.ffn_dim = 128;
  c.vqvae.latent_dim = 64;
  c.vq_train.epochs = 200;
  c.vq_train.base_lr = 0.5;
  c.vq_train.warmup = 100;
  c.speaker.model_dim = 64;
  c.speaker.heads = 4;
  c.speaker.layers = 2;
  c.speaker.ffn_dim = 128;
  c.predictor.model_dim = 64;
  c.predictor.heads = 4;
  c.predictor.layers = 2;
  c.predictor.ffn_dim = 128;
  c.predictor_train.epochs = 100;
  c.predictor_train.base_lr = 0.5;
  c.predictor_train.warmup = 200;
  return c;
}

ExperimentConfig ExperimentConfig::for_profile(const std::string& name) {
  if (name == "defaults") return defaults();
  if (name == "desk") return desk();
  throw ConfigError("unknown profile '" + name + "' (expected defaults or desk)");
}

void ExperimentConfig::set_feature_dims(std::size_t expression_dim, std::size_t audio_dim) {
  vqvae.input_dim = speaker.motion_dim = expression_dim + 3;
  speaker.audio_dim = audio_dim;
}

void ExperimentConfig::validate() const {
  require(window == kTokenWindow, "window must be " + std::to_string(kTokenWindow) +
                                      " (three factor-2 pools), got " + std::to_string(window));
  require(sequence_length > 0 && sequence_length % window == 0,
          "sequence_length " + std::to_string(sequence_length) + " is not a positive multiple of " +
              std::to_string(window));
  require(vq_length > 0 && vq_length % window == 0,
          "vq_length " + std::to_string(vq_length) + " is not a positive multiple of " + std::to_string(window));
  require(vq_length <= sequence_length, "vq_length exceeds sequence_length");
  require(stride > 0, "stride must be positive");
  require(vqvae.chunk_tokens == vq_length / window, "vqvae chunk does not match vq_length");
  const double total = split.train + split.val + split.test;
  require(split.train >= 0 && split.val >= 0 && split.test >= 0 && std::abs(total - 1.0) < 1e-9,
          "split ratios must be non-negative and sum to 1, got " + fmt(total));
  require(nucleus_p > 0.0 && nucleus_p <= 1.0, "nucleus_p must be in (0, 1]");
  require(predictor_train.mask_prob >= 0.0 && predictor_train.mask_prob <= 1.0, "predictor.mask_prob must be in [0, 1]");
  require(predictor.tokens > 0 && predictor.tokens == speaker.tokens, "context_tokens must be positive");
  require(predictor.tokens * window <= sequence_length, "context_tokens span exceeds sequence_length");
  require(vqvae.codebook_size > 0 && vqvae.codebook_size == predictor.codebook_size, "codebook_size must be positive");
  require(predictor.outputs >= 1 && predictor.outputs <= predictor.tokens + speaker.output_steps(),
          "predictor.outputs out of range");
  for (auto [name, dim, heads] : {std::tuple{"vqvae", vqvae.model_dim, vqvae.heads},
                                  std::tuple{"speaker", speaker.model_dim, speaker.heads},
                                  std::tuple{"predictor", predictor.model_dim, predictor.heads}}) {
    require(dim > 0 && heads > 0 && dim % heads == 0,
            std::string(name) + ".model_dim " + std::to_string(dim) + " is not divisible by heads " +
                std::to_string(heads));
  }
  require(vqvae.latent_dim > 0 && vqvae.ffn_dim > 0 && speaker.ffn_dim > 0 && predictor.ffn_dim > 0,
          "dimensions must be positive");
  require(vqvae.commit_weight >= 0.0f, "vqvae.commit_weight must be non-negative");
  require(vq_train.batch_size > 0 && predictor_train.batch_size > 0, "batch sizes must be positive");
  require(metrics.expression_clusters > 0 && metrics.rotation_clusters > 0, "cluster counts must be positive");
  require(metrics.max_lag > 0, "metrics.max_lag must be positive");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "profile") throw ConfigError("'profile' can only be chosen at the top of a config");
  const auto& f = fields();
  const auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, value);
  vqvae.chunk_tokens = window ? vq_length / window : 0;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["profile"] = profile;
  for (const auto& [k, f] : fields()) m[k] = f.get(*this);
  return m;
}

std::string ExperimentConfig::to_text() const {
  std::string out = "profile = " + profile + "\n";
  for (const auto& [k, v] : to_map()) {
    if (k != "profile") out += k + " = " + v + "\n";
  }
  return out;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : to_map()) j[k] = v;
  return j;
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& values) {
  const auto it = values.find("profile");
  ExperimentConfig c = for_profile(it == values.end() ? "defaults" : it->second);
  for (const auto& [k, v] : values) {
    if (k != "profile") c.set(k, v);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw FormatError("config: value of '" + k + "' is not a string");
    values[k] = v.get<std::string>();
  }
  return from_map(values);
}

ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::optional<std::string> profile;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (key == "profile") {
      if (profile || !entries.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": profile must come first and only once");
      }
      profile = value;
      continue;
    }
    entries.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig c = ExperimentConfig::for_profile(profile.value_or("defaults"));
  for (const auto& [k, v] : entries) c.set(k, v);
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                                const std::vector<std::pair<std::string, std::string>>& overrides) {
  if (explicit_path) return load_config(*explicit_path, overrides);
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load_config(env, overrides);
  return parse_config("", overrides);
}

}  // namespace dyad
