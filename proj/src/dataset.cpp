// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dyad/errors.hpp"

namespace dyad {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'A', 'D'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kPreamble = 4 + 2 + 4;

static_assert(std::endian::native == std::endian::little, "DYAD I/O assumes a little-endian host");

void write_block(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

}  // namespace

Standardization Standardization::identity(std::size_t dm) {
  return {std::vector<float>(dm, 0.0f), std::vector<float>(dm, 1.0f)};
}

Standardization Standardization::fit(const std::vector<DyadSample>& samples) {
  if (samples.empty()) throw EmptyInput("standardization: no samples");
  const std::size_t dm = samples.front().speaker_motion.expression_dim();
  std::vector<double> sum(dm, 0.0), sq(dm, 0.0);
  double n = 0.0;
  for (const DyadSample& s : samples) {
    for (const MotionSequence* m : {&s.speaker_motion, &s.listener_motion}) {
      for (std::size_t t = 0; t < m->length(); ++t) {
        for (std::size_t i = 0; i < dm; ++i) {
          sum[i] += m->at(t, i);
          sq[i] += double(m->at(t, i)) * m->at(t, i);
        }
        n += 1.0;
      }
    }
  }
  Standardization st;
  st.mean.resize(dm);
  st.stddev.resize(dm);
  for (std::size_t i = 0; i < dm; ++i) {
    const double mu = sum[i] / n;
    const double var = std::max(0.0, sq[i] / n - mu * mu);
    st.mean[i] = static_cast<float>(mu);
    st.stddev[i] = static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0);
  }
  return st;
}

MotionSequence Standardization::apply(const MotionSequence& seq) const {
  MotionSequence out = seq;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t i = 0; i < mean.size(); ++i) out.at(t, i) = (seq.at(t, i) - mean[i]) / stddev[i];
  }
  return out;
}

MotionSequence Standardization::invert(const MotionSequence& seq) const {
  MotionSequence out = seq;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t i = 0; i < mean.size(); ++i) out.at(t, i) = seq.at(t, i) * stddev[i] + mean[i];
  }
  return out;
}

DyadDataset DyadDataset::from_samples(std::vector<DyadSample> samples) {
  if (samples.empty()) throw EmptyInput("dataset: no samples");
  DyadDataset ds;
  const DyadSample& first = samples.front();
  ds.expression_dim = first.speaker_motion.expression_dim();
  ds.audio_dim = first.speaker_audio.feature_dim;
  ds.fps = first.speaker_motion.fps();
  ds.rate_multiple = first.speaker_audio.rate_multiple;
  ds.standardization = Standardization::fit(samples);
  ds.samples = std::move(samples);
  return ds;
}

void write_dyad_file(const DyadDataset& ds, const std::filesystem::path& path) {
  nlohmann::json header;
  header["d_m"] = ds.expression_dim;
  header["d_a"] = ds.audio_dim;
  header["fps"] = ds.fps;
  header["rate_multiple"] = ds.rate_multiple;
  header["expression_mean"] = ds.standardization.mean;
  header["expression_std"] = ds.standardization.stddev;
  header["sample_count"] = ds.samples.size();
  auto& entries = header["samples"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const DyadSample& s : ds.samples) {
    validate(s);
    if (s.speaker_motion.expression_dim() != ds.expression_dim || s.speaker_audio.feature_dim != ds.audio_dim) {
      throw ShapeError("sample '" + s.id + "' does not match dataset dims");
    }
    entries.push_back({{"id", s.id}, {"length", s.length()}, {"audio_length", s.speaker_audio.length()},
                       {"offset", offset}});
    offset += (2 * s.speaker_motion.values().size() + s.speaker_audio.values.size()) * sizeof(float);
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), 2);
  const auto len = static_cast<std::uint32_t>(text.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const DyadSample& s : ds.samples) {
    write_block(os, s.speaker_motion.values());
    write_block(os, s.speaker_audio.values);
    write_block(os, s.listener_motion.values());
  }
  if (!os) throw IoError("write failed for " + path.string());
}

DyadDataset read_dyad_file(const std::filesystem::path& path, std::optional<std::size_t> expected_dm) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < kPreamble) throw FormatError(where + "truncated preamble at byte " + std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(where + "bad magic at byte 0");
  std::uint16_t version;
  std::memcpy(&version, bytes.data() + 4, 2);
  if (version != kVersion) throw FormatError(where + "unsupported version " + std::to_string(version) + " at byte 4");
  std::uint32_t len;
  std::memcpy(&len, bytes.data() + 6, 4);
  if (kPreamble + len > bytes.size()) throw FormatError(where + "header runs past end of file at byte 6");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(where + "malformed header at byte " + std::to_string(kPreamble + e.byte));
  }

  DyadDataset ds;
  try {
    ds.expression_dim = h.at("d_m");
    ds.audio_dim = h.at("d_a");
    ds.fps = h.at("fps");
    ds.rate_multiple = h.at("rate_multiple");
    ds.standardization.mean = h.at("expression_mean").get<std::vector<float>>();
    ds.standardization.stddev = h.at("expression_std").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + "malformed header at byte " + std::to_string(kPreamble) + ": " + e.what());
  }
  if (expected_dm && *expected_dm != ds.expression_dim) {
    throw FormatError(where + "file has d_m=" + std::to_string(ds.expression_dim) + " but configuration expects d_m=" +
                      std::to_string(*expected_dm));
  }
  if (ds.standardization.mean.size() != ds.expression_dim || ds.standardization.stddev.size() != ds.expression_dim) {
    throw FormatError(where + "standardisation vectors do not match d_m=" + std::to_string(ds.expression_dim));
  }

  const std::size_t payload = kPreamble + len;
  const std::size_t ch = ds.expression_dim + 3;
  const auto& entries = h.at("samples");
  if (h.value("sample_count", entries.size()) != entries.size()) {
    throw FormatError(where + "sample_count disagrees with sample table at byte " + std::to_string(kPreamble));
  }
  std::vector<DyadSample> samples;
  for (const auto& e : entries) {
    const std::size_t n = e.at("length"), na = e.at("audio_length");
    const std::size_t offset = e.at("offset");
    const std::size_t need = (2 * n * ch + na * ds.audio_dim) * sizeof(float);
    const std::size_t start = payload + offset;
    if (start + need > bytes.size()) {
      throw FormatError(where + "sample '" + e.value("id", std::string()) + "' truncated at byte " +
                        std::to_string(bytes.size()) + " (needs " + std::to_string(start + need) + ")");
    }
    DyadSample s;
    s.id = e.value("id", std::string());
    auto read = [&](std::size_t count, std::size_t& cursor) {
      std::vector<float> v(count);
      std::memcpy(v.data(), bytes.data() + cursor, count * sizeof(float));
      cursor += count * sizeof(float);
      return v;
    };
    std::size_t cursor = start;
    s.speaker_motion = MotionSequence(ds.expression_dim, ds.fps);
    s.speaker_motion.values() = read(n * ch, cursor);
    s.speaker_audio.feature_dim = ds.audio_dim;
    s.speaker_audio.rate_multiple = ds.rate_multiple;
    s.speaker_audio.values = read(na * ds.audio_dim, cursor);
    s.listener_motion = MotionSequence(ds.expression_dim, ds.fps);
    s.listener_motion.values() = read(n * ch, cursor);
    try {
      validate(s);
    } catch (const ShapeError& err) {
      throw FormatError(where + err.what());
    }
    samples.push_back(std::move(s));
  }
  ds.samples = std::move(samples);
  return ds;
}

}  // namespace dyad
