// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "dyad/errors.hpp"

namespace dyad {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T byteswap(T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

template <typename T>
void put_le(std::ostream& os, T value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError(path.string() + ": truncated header at byte " + std::to_string(is.gcount()));
  }
  if constexpr (std::endian::native == std::endian::big) value = byteswap(value);
  return value;
}

void write_floats(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
  } else {
    for (float f : values) put_le(os, std::bit_cast<std::uint32_t>(f));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const nlohmann::json& metadata, const AdamState* adam, std::uint64_t step) {
  struct Item {
    std::string name;
    ad::Shape shape;
    std::span<const float> values;
  };
  std::vector<Item> items;
  for (const auto& [name, t] : params) items.push_back({name, t.shape(), t.data()});
  if (adam) {
    for (const auto& [name, t] : params) {
      auto m = adam->m.find(name);
      auto v = adam->v.find(name);
      if (m != adam->m.end()) items.push_back({"adam.m/" + name, t.shape(), m->second});
      if (v != adam->v.end()) items.push_back({"adam.v/" + name, t.shape(), v->second});
    }
  }

  nlohmann::json manifest;
  manifest["seed"] = params.rng_seed();
  manifest["step"] = step;
  manifest["metadata"] = metadata;
  if (adam) {
    manifest["adam"] = {{"step", adam->step}, {"beta1", adam->beta1}, {"beta2", adam->beta2}, {"eps", adam->eps}};
  }
  std::uint64_t offset = 0;
  auto& tensors = manifest["tensors"] = nlohmann::json::array();
  for (const Item& it : items) {
    tensors.push_back({{"name", it.name}, {"shape", it.shape}, {"dtype", "f32"}, {"offset", offset}});
    offset += it.values.size() * 4;
  }
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Item& it : items) write_floats(os, it.values);
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic at byte 0");
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version) + " at byte 4");
  const auto length = get_le<std::uint64_t>(is, path);
  std::string text(length, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(length))) {
    throw FormatError(path.string() + ": truncated manifest at byte 16");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": malformed manifest at byte " + std::to_string(16 + e.byte));
  }
  const std::uint64_t payload_start = 16 + length;
  is.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(is.tellg());

  Checkpoint ck;
  ck.params.set_rng_seed(manifest.value("seed", std::uint64_t{0}));
  ck.step = manifest.value("step", std::uint64_t{0});
  ck.metadata = manifest.value("metadata", nlohmann::json::object());
  if (manifest.contains("adam")) {
    AdamState st;
    st.step = manifest["adam"]["step"];
    st.beta1 = manifest["adam"]["beta1"];
    st.beta2 = manifest["adam"]["beta2"];
    st.eps = manifest["adam"]["eps"];
    ck.adam = st;
  }
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    if (entry.value("dtype", std::string("f32")) != "f32") throw FormatError(name + ": unsupported dtype");
    const ad::Shape shape = entry.at("shape").get<ad::Shape>();
    const std::uint64_t offset = entry.at("offset");
    const std::size_t n = ad::numel(shape);
    if (payload_start + offset + n * 4 > file_size) {
      throw FormatError(path.string() + ": tensor '" + name + "' runs past end of file at byte " +
                        std::to_string(payload_start + offset));
    }
    std::vector<float> values(n);
    is.seekg(static_cast<std::streamoff>(payload_start + offset));
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * 4));
    if constexpr (std::endian::native == std::endian::big) {
      for (float& f : values) f = std::bit_cast<float>(byteswap(std::bit_cast<std::uint32_t>(f)));
    }
    if (name.starts_with("adam.m/") && ck.adam) {
      ck.adam->m[name.substr(7)] = std::move(values);
    } else if (name.starts_with("adam.v/") && ck.adam) {
      ck.adam->v[name.substr(7)] = std::move(values);
    } else {
      ck.params.add(name, ad::Tensor::from(shape, std::move(values)));
    }
  }
  return ck;
}

}  // namespace dyad
