// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "dyad/optim.hpp"
#include "dyad/params.hpp"

namespace dyad {

// On-disk layout: "DYCK", u32 version, u64 manifest length, JSON manifest,
// then a raw little-endian f32 payload. The manifest lists name, shape,
// dtype and payload byte offset of every tensor, plus seed, step and
// free-form metadata. Optimiser moments are stored as "adam.m/<name>" and
// "adam.v/<name>" tensors.
struct Checkpoint {
  ParameterStore params;
  std::optional<AdamState> adam;
  std::uint64_t step = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const nlohmann::json& metadata, const AdamState* adam = nullptr,
                     std::uint64_t step = 0);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dyad
