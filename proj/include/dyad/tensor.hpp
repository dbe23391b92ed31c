// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dyad::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
  }
};

// Value handle over a node of the dynamically built backward graph. Copies
// alias the same node; use clone() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  std::span<float> data() { return node_->data; }
  std::span<const float> data() const { return node_->data; }
  std::span<float> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  void zero_grad() { node_->grad.clear(); }

  float item() const;
  float at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Tensor clone() const;
  Tensor detach() const;

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording in scope (inference on frozen models).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad on every reachable leaf that requires it. Leaf gradients
// accumulate across calls; interior gradients are recomputed each call.
void backward(const Tensor& loss);

// ---- forward ops -----------------------------------------------------------
// Binary element-wise ops accept b with a's shape or a trailing suffix of
// it (broadcast over the leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
Tensor square(const Tensor& a);

// a [..., M, K] x b [K, N] -> [..., M, N]
Tensor matmul(const Tensor& a, const Tensor& b);
// a [B, M, K] x b [B, K, N] -> [B, M, N]
Tensor bmm(const Tensor& a, const Tensor& b);
// Swap the last two axes.
Tensor transpose(const Tensor& a);
// General axis permutation.
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& a, Shape shape);

Tensor softmax(const Tensor& a);  // last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation

// x [B, L, Cin], weight [kernel*Cin, Cout], bias [Cout] (may be undefined)
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding);
// Max over windows of `kernel` along axis 1 of [B, L, C].
Tensor max_pool1d(const Tensor& x, std::size_t kernel, std::size_t stride);
// Repeat each step of axis 1 `factor` times.
Tensor upsample_repeat(const Tensor& x, std::size_t factor);

// table [K, D]; result shape = index_shape + [D].
Tensor embedding(const Tensor& table, std::span<const int> indices, const Shape& index_shape);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Identity forward, zero gradient.
Tensor stop_gradient(const Tensor& a);

// Mean over rows of -log softmax(logits)[target]; logits [N, K]. Rows with a
// negative target are ignored.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace dyad::ad
