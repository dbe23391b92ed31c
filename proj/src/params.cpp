// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/params.hpp"

#include <algorithm>

#include "dyad/errors.hpp"

namespace dyad {

ad::Tensor& ParameterStore::add(const std::string& name, ad::Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

ad::Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

const ad::Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) {
    auto g = t.grad();
    std::fill(g.begin(), g.end(), 0.0f);
  }
}

void ParameterStore::set_trainable(bool on) {
  for (auto& [name, t] : entries_) t.set_requires_grad(on);
}

void ParameterStore::assign_from(const ParameterStore& other) {
  for (auto& [name, t] : entries_) {
    if (!other.contains(name)) throw FormatError("checkpoint lacks parameter '" + name + "'");
    const ad::Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + ad::to_string(src.shape()) +
                        " in checkpoint, expected " + ad::to_string(t.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
  }
}

}  // namespace dyad
