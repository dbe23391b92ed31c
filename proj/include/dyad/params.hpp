// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dyad/tensor.hpp"

namespace dyad {

// Named trainable tensors in insertion order.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::uint64_t seed) : rng_seed_(seed) {}

  ad::Tensor& add(const std::string& name, ad::Tensor value);
  ad::Tensor& get(const std::string& name);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Grad buffers become explicit zeros (so every parameter "has" a grad).
  void zero_grad();
  void set_trainable(bool on);

  std::uint64_t rng_seed() const { return rng_seed_; }
  void set_rng_seed(std::uint64_t seed) { rng_seed_ = seed; }

  // Copies values of identically named, identically shaped entries.
  void assign_from(const ParameterStore& other);

 private:
  std::vector<std::pair<std::string, ad::Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t rng_seed_ = 0;
};

}  // namespace dyad
