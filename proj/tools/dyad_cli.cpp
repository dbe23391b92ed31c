// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0
//
// dyad: synth-data, train-vqvae, train-predictor, generate, evaluate.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dyad/baselines.hpp"
#include "dyad/config.hpp"
#include "dyad/dataset.hpp"
#include "dyad/errors.hpp"
#include "dyad/pipeline.hpp"
#include "dyad/synth.hpp"

namespace {

using namespace dyad;
using Overrides = std::vector<std::pair<std::string, std::string>>;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Overrides parse_sets(const std::vector<std::string>& sets) {
  Overrides out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

std::optional<std::filesystem::path> config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Keys named in the config file or on the command line.
std::set<std::string> explicit_keys(const std::optional<std::filesystem::path>& path, const Overrides& overrides) {
  std::set<std::string> keys;
  if (path) {
    std::stringstream in(read_text(*path));
    std::string line;
    while (std::getline(in, line)) {
      line = line.substr(0, line.find('#'));
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      keys.insert(key);
    }
  }
  for (const auto& [k, v] : overrides) keys.insert(k);
  return keys;
}

// Feature dimensions follow the data unless the config names them.
ExperimentConfig config_for_data(const std::string& flag, const Overrides& overrides, const DyadDataset& data) {
  const auto path = config_path(flag);
  ExperimentConfig cfg = resolve_config(path, overrides);
  const auto keys = explicit_keys(path, overrides);
  const std::size_t dm = keys.count("data.expression_dim") ? cfg.vqvae.input_dim - 3 : data.expression_dim;
  const std::size_t da = keys.count("data.audio_dim") ? cfg.speaker.audio_dim : data.audio_dim;
  cfg.set_feature_dims(dm, da);
  cfg.validate();
  return cfg;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::pair<std::string, std::string> checkpoint_pair(const std::string& flag) {
  const auto parts = split_list(flag);
  if (parts.size() != 2) throw ConfigError("--checkpoints expects <vqvae>,<predictor>");
  return {parts[0], parts[1]};
}

struct SynthArgs {
  std::string out;
  std::size_t samples = 64, length = 64, modes = 1;
  std::uint64_t seed = 0;
  double noise = 0.02;
  std::optional<int> lag;
  std::optional<std::size_t> mode;
  bool audio_informative = false;
  std::size_t expression_dim = kDefaultExpressionDim, audio_dim = kDefaultAudioDim;
};

int cmd_synth(const SynthArgs& a) {
  if (a.samples == 0) throw ConfigError("--samples must be positive");
  SynthOptions opt;
  opt.expression_dim = a.expression_dim;
  opt.audio_dim = a.audio_dim;
  opt.noise = a.noise;
  opt.lag = a.lag;
  opt.mode = a.mode;
  opt.audio_informative = a.audio_informative;
  std::vector<DyadSample> samples;
  for (std::size_t i = 0; i < a.samples; ++i) samples.push_back(synth_dyad(a.seed + i, a.length, a.modes, opt));
  const DyadDataset ds = DyadDataset::from_samples(std::move(samples));
  write_dyad_file(ds, a.out);
  double mean_abs = 0.0;
  std::size_t n = 0;
  for (const auto& s : ds.samples) {
    for (float v : s.listener_motion.values()) mean_abs += std::abs(v), ++n;
  }
  std::cout << "wrote " << ds.samples.size() << " samples x " << a.length << " frames (d_m " << ds.expression_dim
            << ", d_a " << ds.audio_dim << ", modes " << a.modes << ") to " << a.out << "\n"
            << "listener mean |value| " << (n ? mean_abs / static_cast<double>(n) : 0.0) << "\n";
  return 0;
}

struct TrainArgs {
  std::string data, config, out, report, vqvae, fusion;
  std::vector<std::string> sets;
  bool resume = false, no_audio = false, no_motion = false, quiet = false;
  std::optional<std::size_t> epochs;
};

std::filesystem::path report_path(const TrainArgs& a) {
  return a.report.empty() ? std::filesystem::path(a.out + ".report.json") : std::filesystem::path(a.report);
}

int cmd_train_vqvae(const TrainArgs& a) {
  Overrides ov = parse_sets(a.sets);
  if (a.epochs) ov.emplace_back("vqvae.epochs", std::to_string(*a.epochs));
  const DyadDataset data = read_dyad_file(a.data);
  const ExperimentConfig cfg = config_for_data(a.config, ov, data);
  const TrainOutcome out = run_train_vqvae(cfg, data, a.out, a.resume, a.quiet ? nullptr : &std::cerr);
  write_json(report_path(a), out.report);
  std::cout << "codes used " << out.report["codes_used"] << "/" << cfg.vqvae.codebook_size << ", held-out L2 "
            << out.report["heldout_l2"] << "\n";
  return 0;
}

int cmd_train_predictor(const TrainArgs& a) {
  if (a.no_audio && a.no_motion) throw ConfigError("--no-audio and --no-motion leave no speaker input");
  Overrides ov = parse_sets(a.sets);
  if (a.epochs) ov.emplace_back("predictor.epochs", std::to_string(*a.epochs));
  if (!a.fusion.empty()) ov.emplace_back("speaker.fusion", a.fusion);
  if (a.no_audio) ov.emplace_back("speaker.fusion", "motion");
  if (a.no_motion) ov.emplace_back("speaker.fusion", "audio");
  const DyadDataset data = read_dyad_file(a.data);
  ExperimentConfig cfg;
  if (config_path(a.config)) {
    cfg = config_for_data(a.config, ov, data);
  } else {
    // Without a config file, start from the settings the VQ-VAE was trained with.
    cfg = load_vq_bundle(a.vqvae).config;
    for (const auto& [k, v] : ov) cfg.set(k, v);
    cfg.validate();
  }
  const TrainOutcome out = run_train_predictor(cfg, data, a.vqvae, a.out, a.resume, a.quiet ? nullptr : &std::cerr);
  write_json(report_path(a), out.report);
  std::cout << "initial cross-entropy " << out.report["initial_ce"];
  if (out.report.contains("heldout_accuracy")) std::cout << ", held-out accuracy " << out.report["heldout_accuracy"];
  std::cout << "\n";
  return 0;
}

struct GenerateArgs {
  std::string speakers, checkpoints, out, split = "test";
  std::size_t samples = 1;
  std::optional<double> nucleus_p;
  std::optional<std::size_t> frames;
  std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a) {
  const auto [vq_path, pred_path] = checkpoint_pair(a.checkpoints);
  const VqBundle vq = load_vq_bundle(vq_path);
  const ListenerBundle listener = load_listener_bundle(pred_path);
  const ExperimentConfig& cfg = listener.config;
  const DyadDataset data = read_dyad_file(a.speakers, cfg.vqvae.input_dim - 3);
  const auto speakers = select_split(data.samples, cfg.sequence_length, cfg.split, parse_split(a.split));
  if (speakers.empty()) throw EmptyInput("no speaker windows in split '" + a.split + "'");
  GenerateOptions opt;
  opt.samples = a.samples;
  opt.nucleus_p = a.nucleus_p;
  opt.frames = a.frames;
  opt.seed = a.seed;
  auto generated = generate_listeners(vq, listener, speakers, opt);
  const std::size_t n = generated.size();
  write_dyad_file(DyadDataset::from_samples(std::move(generated)), a.out);
  std::cout << "wrote " << n << " generated sequences to " << a.out << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string pred, gt, bank, methods, out, checkpoints, config, split = "test", bank_split = "train";
  std::vector<std::string> sets;
  std::size_t multi_sample = 0;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::optional<VqBundle> vq;
  std::optional<ListenerBundle> listener;
  if (!a.checkpoints.empty()) {
    const auto [vq_path, pred_path] = checkpoint_pair(a.checkpoints);
    vq = load_vq_bundle(vq_path);
    listener = load_listener_bundle(pred_path);
  }
  const DyadDataset gt = read_dyad_file(a.gt);
  const Overrides ov = parse_sets(a.sets);
  ExperimentConfig cfg;
  if (config_path(a.config) || !listener) {
    cfg = config_for_data(a.config, ov, gt);
  } else {
    cfg = listener->config;
    for (const auto& [k, v] : ov) cfg.set(k, v);
    cfg.validate();
  }

  EvaluateRequest req;
  req.ground_truth = select_split(gt.samples, cfg.sequence_length, cfg.split, parse_split(a.split));
  if (!a.bank.empty()) {
    const DyadDataset bank = read_dyad_file(a.bank, gt.expression_dim);
    req.train_bank = select_split(bank.samples, cfg.sequence_length, cfg.split, parse_split(a.bank_split));
  }
  if (!a.pred.empty()) req.predictions = read_dyad_file(a.pred, gt.expression_dim).samples;
  if (a.methods.empty()) {
    for (const auto& m : baseline_names()) {
      if (m != "codebook_random_walk" || vq) req.methods.push_back(m);
    }
    if (!a.pred.empty()) req.methods.push_back("ours");
  } else {
    req.methods = split_list(a.methods);
  }
  req.vq = vq ? &*vq : nullptr;
  req.listener = listener ? &*listener : nullptr;
  req.multi_sample = a.multi_sample;
  req.seed = a.seed;
  const EvaluationResult result = run_evaluate(cfg, req);
  std::cout << result.to_text();
  if (!a.out.empty()) write_json(a.out, result.to_json(cfg));
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Dyadic listener motion: data synthesis, training, generation and evaluation"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "Write a file of synthetic dyads");
  synth->add_option("--out", sa.out, "Output DYAD file")->required();
  synth->add_option("--samples", sa.samples, "Number of dyads");
  synth->add_option("--length", sa.length, "Frames per dyad");
  synth->add_option("--modes", sa.modes, "Number of listener response modes");
  synth->add_option("--seed", sa.seed, "Seed of the first dyad");
  synth->add_option("--noise", sa.noise, "Listener noise level");
  synth->add_option("--lag", sa.lag, "Fixed listener lag in frames");
  synth->add_option("--mode", sa.mode, "Fixed response mode");
  synth->add_flag("--audio-informative", sa.audio_informative, "Audio carries a source that motion lacks");
  synth->add_option("--expression-dim", sa.expression_dim, "Expression coefficients per frame");
  synth->add_option("--audio-dim", sa.audio_dim, "Audio features per audio frame");

  TrainArgs va;
  auto* tv = app.add_subcommand("train-vqvae", "Train the motion VQ-VAE");
  tv->add_option("--data", va.data, "Training DYAD file")->required();
  tv->add_option("--config", va.config, "Config file (default $DYAD_CONFIG)");
  tv->add_option("--out-checkpoint", va.out, "Checkpoint path")->required();
  tv->add_option("--report", va.report, "JSON report (default <checkpoint>.report.json)");
  tv->add_option("--set", va.sets, "Config override key=value");
  tv->add_option("--epochs", va.epochs, "Override vqvae.epochs");
  tv->add_flag("--resume", va.resume, "Continue from an existing checkpoint");
  tv->add_flag("--quiet", va.quiet, "No per-epoch log");

  TrainArgs pa;
  auto* tp = app.add_subcommand("train-predictor", "Train the speaker encoder and listener predictor");
  tp->add_option("--data", pa.data, "Training DYAD file")->required();
  tp->add_option("--vqvae", pa.vqvae, "Trained VQ-VAE checkpoint")->required();
  tp->add_option("--config", pa.config, "Config file (default $DYAD_CONFIG, else the VQ-VAE's config)");
  tp->add_option("--out-checkpoint", pa.out, "Checkpoint path")->required();
  tp->add_option("--report", pa.report, "JSON report (default <checkpoint>.report.json)");
  tp->add_option("--set", pa.sets, "Config override key=value");
  tp->add_option("--epochs", pa.epochs, "Override predictor.epochs");
  tp->add_option("--fusion", pa.fusion, "cross, concat, motion or audio")
      ->check(CLI::IsMember({"cross", "concat", "motion", "audio"}));
  tp->add_flag("--no-audio", pa.no_audio, "Speaker motion only");
  tp->add_flag("--no-motion", pa.no_motion, "Speaker audio only");
  tp->add_flag("--resume", pa.resume, "Continue from an existing checkpoint");
  tp->add_flag("--quiet", pa.quiet, "No per-epoch log");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Roll out listener motion for speaker windows");
  gen->add_option("--speaker-data", ga.speakers, "DYAD file with speakers")->required();
  gen->add_option("--checkpoints", ga.checkpoints, "<vqvae>,<predictor>")->required();
  gen->add_option("--samples", ga.samples, "Rollouts per speaker");
  gen->add_option("--nucleus-p", ga.nucleus_p, "Nucleus mass (default from config)");
  gen->add_option("--frames", ga.frames, "Frames per rollout (default: whole window)");
  gen->add_option("--seed", ga.seed, "Sampling seed");
  gen->add_option("--split", ga.split, "all, train, val or test");
  gen->add_option("--out", ga.out, "Output DYAD file")->required();

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Metric table for baselines and generated listeners");
  ev->add_option("--gt", ea.gt, "Ground-truth DYAD file")->required();
  ev->add_option("--pred", ea.pred, "Generated DYAD file (method 'ours')");
  ev->add_option("--train-bank", ea.bank, "DYAD file the baselines draw from");
  ev->add_option("--methods", ea.methods, "Comma list (default: every baseline, plus ours with --pred)");
  ev->add_option("--out-report", ea.out, "JSON report path");
  ev->add_option("--checkpoints", ea.checkpoints, "<vqvae>,<predictor>");
  ev->add_option("--multi-sample", ea.multi_sample, "Best-of-x L2 curve up to x samples");
  ev->add_option("--config", ea.config, "Config file (default $DYAD_CONFIG, else the predictor's config)");
  ev->add_option("--set", ea.sets, "Config override key=value");
  ev->add_option("--split", ea.split, "Ground-truth split");
  ev->add_option("--bank-split", ea.bank_split, "Train-bank split");
  ev->add_option("--seed", ea.seed, "Seed for stochastic baselines and sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: ConfigError: " << e.what() << "\n";
    return exit_code(ErrorKind::Config);
  }

  if (*synth) return cmd_synth(sa);
  if (*tv) return cmd_train_vqvae(va);
  if (*tp) return cmd_train_predictor(pa);
  if (*gen) return cmd_generate(ga);
  return cmd_evaluate(ea);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dyad::Error& e) {
    std::cerr << "error: " << dyad::to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return dyad::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << one_line(e.what()) << "\n";
    return 1;
  }
}
