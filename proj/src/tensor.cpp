// Copyright 2026 The dyadic-listener Authors
//
// Licensed under the Apache License, Version 2.0

#include "dyad/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dyad/errors.hpp"

namespace dyad::ad {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> make_node(Shape shape, std::initializer_list<const Tensor*> parents) {
  auto node = std::make_shared<Node>();
  node->data.assign(numel(shape), 0.0f);
  node->shape = std::move(shape);
  node->is_leaf = false;
  if (g_grad_enabled) {
    for (const Tensor* p : parents) {
      if (p->defined() && p->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
      for (const Tensor* p : parents) {
        if (p->defined()) node->parents.push_back(p->ptr());
      }
    }
  }
  return node;
}

// Gradient sink for a parent, or nullptr when it does not need one.
float* grad_of(const std::shared_ptr<Node>& p) {
  if (!p || !p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
}

std::size_t inner_size(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

std::size_t outer_size(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->data.assign(numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (values.size() != numel(shape)) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return full({}, value, requires_grad); }

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Tensor Tensor::clone() const {
  return from(shape(), node_->data, node_->requires_grad);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0f);
  }
  loss.node().grad.assign(1, 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

// ---- element-wise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_broadcast("add", a, b);
  auto out = make_node(a.shape(), {&a, &b});
  const std::size_t nb = b.size();
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] + pb[i % nb];
  if (out->requires_grad) {
    out->backward = [pa_node = a.ptr(), pb_node = b.ptr(), nb](Node& self) {
      if (float* ga = grad_of(pa_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
      if (float* gb = grad_of(pb_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_broadcast("sub", a, b);
  auto out = make_node(a.shape(), {&a, &b});
  const std::size_t nb = b.size();
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] - pb[i % nb];
  if (out->requires_grad) {
    out->backward = [pa_node = a.ptr(), pb_node = b.ptr(), nb](Node& self) {
      if (float* ga = grad_of(pa_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
      if (float* gb = grad_of(pb_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] -= self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_broadcast("mul", a, b);
  auto out = make_node(a.shape(), {&a, &b});
  const std::size_t nb = b.size();
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] * pb[i % nb];
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), b_node = b.ptr(), nb](Node& self) {
      const float* va = a_node->data.data();
      const float* vb = b_node->data.data();
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * vb[i % nb];
      }
      if (float* gb = grad_of(b_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i] * va[i];
      }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, float factor) {
  auto out = make_node(a.shape(), {&a});
  const float* pa = a.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] * factor;
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), factor](Node& self) {
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * factor;
      }
    };
  }
  return Tensor(out);
}

Tensor square(const Tensor& a) {
  auto out = make_node(a.shape(), {&a});
  const float* pa = a.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] * pa[i];
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr()](Node& self) {
      const float* va = a_node->data.data();
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += 2.0f * va[i] * self.grad[i];
      }
    };
  }
  return Tensor(out);
}

Tensor relu(const Tensor& a) {
  auto out = make_node(a.shape(), {&a});
  const float* pa = a.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = pa[i] > 0.0f ? pa[i] : 0.0f;
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr()](Node& self) {
      const float* va = a_node->data.data();
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (va[i] > 0.0f) ga[i] += self.grad[i];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor gelu(const Tensor& a) {
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  auto out = make_node(a.shape(), {&a});
  const float* pa = a.data().data();
  for (std::size_t i = 0; i < out->data.size(); ++i) {
    const float x = pa[i];
    out->data[i] = 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
  }
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr()](Node& self) {
      const float* va = a_node->data.data();
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const float x = va[i];
          const float t = std::tanh(c * (x + 0.044715f * x * x * x));
          const float dt = (1.0f - t * t) * c * (1.0f + 3.0f * 0.044715f * x * x);
          ga[i] += self.grad[i] * (0.5f * (1.0f + t) + 0.5f * x * dt);
        }
      }
    };
  }
  return Tensor(out);
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1), rows = a.size() / k;
  Shape shape = a.shape();
  shape.back() = n;
  auto out = make_node(shape, {&a, &b});
  MapMat(out->data.data(), rows, n).noalias() =
      ConstMapMat(a.data().data(), rows, k) * ConstMapMat(b.data().data(), k, n);
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), b_node = b.ptr(), rows, k, n](Node& self) {
      ConstMapMat g(self.grad.data(), rows, n);
      if (float* ga = grad_of(a_node)) {
        MapMat(ga, rows, k).noalias() += g * ConstMapMat(b_node->data.data(), k, n).transpose();
      }
      if (float* gb = grad_of(b_node)) {
        MapMat(gb, k, n).noalias() += ConstMapMat(a_node->data.data(), rows, k).transpose() * g;
      }
    };
  }
  return Tensor(out);
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  auto out = make_node({batch, m, n}, {&a, &b});
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat(out->data.data() + i * m * n, m, n).noalias() =
        ConstMapMat(a.data().data() + i * m * k, m, k) * ConstMapMat(b.data().data() + i * k * n, k, n);
  }
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), b_node = b.ptr(), batch, m, k, n](Node& self) {
      float* ga = grad_of(a_node);
      float* gb = grad_of(b_node);
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMapMat g(self.grad.data() + i * m * n, m, n);
        if (ga) {
          MapMat(ga + i * m * k, m, k).noalias() +=
              g * ConstMapMat(b_node->data.data() + i * k * n, k, n).transpose();
        }
        if (gb) {
          MapMat(gb + i * k * n, k, n).noalias() +=
              ConstMapMat(a_node->data.data() + i * m * k, m, k).transpose() * g;
        }
      }
    };
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose: rank < 2 shape " + to_string(a.shape()));
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[a.rank() - 1], order[a.rank() - 2]);
  return permute(a, order);
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw ShapeError("permute: order rank mismatch for " + to_string(a.shape()));
  Shape shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    shape[i] = a.dim(order[i]);
    src_stride[i] = in_strides[order[i]];
  }
  // map[j] = flat source index of output element j
  std::vector<std::size_t> map(a.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t j = 0; j < map.size(); ++j) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < r; ++d) src += idx[d] * src_stride[d];
    map[j] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  auto out = make_node(shape, {&a});
  const float* pa = a.data().data();
  for (std::size_t j = 0; j < map.size(); ++j) out->data[j] = pa[map[j]];
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), map = std::move(map)](Node& self) {
      if (float* ga = grad_of(a_node)) {
        for (std::size_t j = 0; j < map.size(); ++j) ga[map[j]] += self.grad[j];
      }
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  auto out = make_node(std::move(shape), {&a});
  std::copy(a.data().begin(), a.data().end(), out->data.begin());
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr()](Node& self) {
      if (float* ga = grad_of(a_node)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
      }
    };
  }
  return Tensor(out);
}

// ---- normalisation ---------------------------------------------------------

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t d = a.shape().back(), rows = a.size() / d;
  auto out = make_node(a.shape(), {&a});
  const float* pa = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = pa + r * d;
    float* y = out->data.data() + r * d;
    const float mx = *std::max_element(x, x + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    const float inv = static_cast<float>(1.0 / total);
    for (std::size_t j = 0; j < d; ++j) y[j] *= inv;
  }
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), d, rows](Node& self) {
      float* ga = grad_of(a_node);
      if (!ga) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const float* y = self.data.data() + r * d;
        const float* g = self.grad.data() + r * d;
        float dot = 0.0f;
        for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm: feature dim " + std::to_string(d) + " vs gamma " +
                     to_string(gamma.shape()) + ", beta " + to_string(beta.shape()));
  }
  const std::size_t rows = x.size() / d;
  auto out = make_node(x.shape(), {&x, &gamma, &beta});
  std::vector<float> xhat(x.size());
  std::vector<float> rstd(rows);
  const float* px = x.data().data();
  const float* pg = gamma.data().data();
  const float* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = px + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = static_cast<float>(1.0 / std::sqrt(var + eps));
    for (std::size_t j = 0; j < d; ++j) {
      const float h = static_cast<float>(row[j] - mu) * rstd[r];
      xhat[r * d + j] = h;
      out->data[r * d + j] = h * pg[j] + pb[j];
    }
  }
  if (out->requires_grad) {
    out->backward = [x_node = x.ptr(), g_node = gamma.ptr(), b_node = beta.ptr(),
                     xhat = std::move(xhat), rstd = std::move(rstd), d, rows](Node& self) {
      float* gx = grad_of(x_node);
      float* gg = grad_of(g_node);
      float* gb = grad_of(b_node);
      const float* gamma_v = g_node->data.data();
      std::vector<float> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* g = self.grad.data() + r * d;
        const float* h = xhat.data() + r * d;
        float sum_dh = 0.0f, sum_dh_h = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
          if (gg) gg[j] += g[j] * h[j];
          if (gb) gb[j] += g[j];
          dxhat[j] = g[j] * gamma_v[j];
          sum_dh += dxhat[j];
          sum_dh_h += dxhat[j] * h[j];
        }
        if (gx) {
          const float k = rstd[r] / static_cast<float>(d);
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += k * (static_cast<float>(d) * dxhat[j] - sum_dh - h[j] * sum_dh_h);
          }
        }
      }
    };
  }
  return Tensor(out);
}

// ---- temporal ops ----------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding) {
  if (x.rank() != 3 || weight.rank() != 2 || kernel == 0 || stride == 0 ||
      weight.dim(0) != kernel * x.dim(2)) {
    throw ShapeError("conv1d: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()) + " for kernel " + std::to_string(kernel));
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), cin = x.dim(2), cout = weight.dim(1);
  if (len + 2 * padding < kernel) throw ShapeError("conv1d: input shorter than kernel " + to_string(x.shape()));
  if (bias.defined() && bias.size() != cout) {
    throw ShapeError("conv1d: bias " + to_string(bias.shape()) + " for " + std::to_string(cout) + " outputs");
  }
  const std::size_t lout = (len + 2 * padding - kernel) / stride + 1;
  const std::size_t kc = kernel * cin;
  std::vector<float> cols(batch * lout * kc, 0.0f);
  const float* px = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      float* dst = cols.data() + (b * lout + t) * kc;
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
        if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(len)) continue;
        std::copy_n(px + (b * len + src_t) * cin, cin, dst + k * cin);
      }
    }
  }
  auto out = make_node({batch, lout, cout}, {&x, &weight, &bias});
  const std::size_t rows = batch * lout;
  MapMat result(out->data.data(), rows, cout);
  result.noalias() = ConstMapMat(cols.data(), rows, kc) * ConstMapMat(weight.data().data(), kc, cout);
  if (bias.defined()) {
    result.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data().data(), cout);
  }
  if (out->requires_grad) {
    out->backward = [x_node = x.ptr(), w_node = weight.ptr(), b_node = bias.ptr(), cols = std::move(cols),
                     batch, len, cin, cout, lout, kc, kernel, stride, padding](Node& self) {
      const std::size_t rows = batch * lout;
      ConstMapMat g(self.grad.data(), rows, cout);
      if (float* gw = grad_of(w_node)) {
        MapMat(gw, kc, cout).noalias() += ConstMapMat(cols.data(), rows, kc).transpose() * g;
      }
      if (float* gb = grad_of(b_node)) {
        Eigen::Map<Eigen::RowVectorXf>(gb, cout) += g.colwise().sum();
      }
      if (float* gx = grad_of(x_node)) {
        RowMat dcols = g * ConstMapMat(w_node->data.data(), kc, cout).transpose();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < lout; ++t) {
            const float* src = dcols.data() + (b * lout + t) * kc;
            for (std::size_t k = 0; k < kernel; ++k) {
              const std::ptrdiff_t dst_t = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(padding);
              if (dst_t < 0 || dst_t >= static_cast<std::ptrdiff_t>(len)) continue;
              float* dst = gx + (b * len + dst_t) * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += src[k * cin + c];
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor max_pool1d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 3 || kernel == 0 || stride == 0 || x.dim(1) < kernel) {
    throw ShapeError("max_pool1d: input " + to_string(x.shape()) + " with kernel " + std::to_string(kernel));
  }
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  const std::size_t lout = (len - kernel) / stride + 1;
  auto out = make_node({batch, lout, ch}, {&x});
  std::vector<std::size_t> argmax(out->data.size());
  const float* px = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = (b * len + t * stride) * ch + c;
        for (std::size_t k = 1; k < kernel; ++k) {
          const std::size_t idx = (b * len + t * stride + k) * ch + c;
          if (px[idx] > px[best]) best = idx;
        }
        const std::size_t o = (b * lout + t) * ch + c;
        out->data[o] = px[best];
        argmax[o] = best;
      }
    }
  }
  if (out->requires_grad) {
    out->backward = [x_node = x.ptr(), argmax = std::move(argmax)](Node& self) {
      if (float* gx = grad_of(x_node)) {
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
      }
    };
  }
  return Tensor(out);
}

Tensor upsample_repeat(const Tensor& x, std::size_t factor) {
  if (x.rank() != 3 || factor == 0) throw ShapeError("upsample_repeat: input " + to_string(x.shape()));
  const std::size_t batch = x.dim(0), len = x.dim(1), ch = x.dim(2);
  auto out = make_node({batch, len * factor, ch}, {&x});
  const float* px = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len * factor; ++t) {
      std::copy_n(px + (b * len + t / factor) * ch, ch, out->data.data() + (b * len * factor + t) * ch);
    }
  }
  if (out->requires_grad) {
    out->backward = [x_node = x.ptr(), batch, len, ch, factor](Node& self) {
      if (float* gx = grad_of(x_node)) {
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t t = 0; t < len * factor; ++t) {
            const float* src = self.grad.data() + (b * len * factor + t) * ch;
            float* dst = gx + (b * len + t / factor) * ch;
            for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor embedding(const Tensor& table, std::span<const int> indices, const Shape& index_shape) {
  if (table.rank() != 2 || numel(index_shape) != indices.size()) {
    throw ShapeError("embedding: table " + to_string(table.shape()) + " with index shape " +
                     to_string(index_shape));
  }
  const std::size_t rows = table.dim(0), d = table.dim(1);
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw RangeError("embedding: index " + std::to_string(i) + " outside [0, " + std::to_string(rows) + ")");
    }
  }
  Shape shape = index_shape;
  shape.push_back(d);
  auto out = make_node(shape, {&table});
  const float* pt = table.data().data();
  for (std::size_t n = 0; n < indices.size(); ++n) {
    std::copy_n(pt + static_cast<std::size_t>(indices[n]) * d, d, out->data.data() + n * d);
  }
  if (out->requires_grad) {
    out->backward = [t_node = table.ptr(), idx = std::vector<int>(indices.begin(), indices.end()), d](Node& self) {
      if (float* gt = grad_of(t_node)) {
        for (std::size_t n = 0; n < idx.size(); ++n) {
          float* dst = gt + static_cast<std::size_t>(idx[n]) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[n * d + j];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + to_string(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(first) + " vs " + to_string(s));
    shape[axis] += s[axis];
    s[axis] = first[axis];
    if (s != first) throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " + to_string(p.shape()));
  }
  const std::size_t outer = outer_size(first, axis), inner = inner_size(first, axis);
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data.resize(numel(shape));
  node->is_leaf = false;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Tensor& p : parts) needs = needs || p.requires_grad();
  }
  const std::size_t out_row = shape[axis] * inner;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t row = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * row, row, node->data.data() + o * out_row + off);
    }
    offsets.push_back(off);
    off += row;
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor& p : parts) node->parents.push_back(p.ptr());
    node->backward = [offsets = std::move(offsets), outer, out_row, inner, axis](Node& self) {
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        float* g = grad_of(self.parents[i]);
        if (!g) continue;
        const std::size_t row = self.parents[i]->shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const float* src = self.grad.data() + o * out_row + offsets[i];
          for (std::size_t j = 0; j < row; ++j) g[o * row + j] += src[j];
        }
      }
    };
  }
  return Tensor(node);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.dim(axis)) {
    throw RangeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  const std::size_t outer = outer_size(a.shape(), axis), inner = inner_size(a.shape(), axis);
  const std::size_t in_row = a.dim(axis) * inner, out_row = length * inner;
  auto out = make_node(shape, {&a});
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().data() + o * in_row + start * inner, out_row, out->data.data() + o * out_row);
  }
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr(), outer, in_row, out_row, offset = start * inner](Node& self) {
      if (float* g = grad_of(a_node)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < out_row; ++j) g[o * in_row + offset + j] += self.grad[o * out_row + j];
        }
      }
    };
  }
  return Tensor(out);
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto out = make_node({}, {&a});
  double total = 0.0;
  for (float v : a.data()) total += v;
  out->data[0] = static_cast<float>(total);
  if (out->requires_grad) {
    out->backward = [a_node = a.ptr()](Node& self) {
      if (float* g = grad_of(a_node)) {
        for (std::size_t i = 0; i < a_node->data.size(); ++i) g[i] += self.grad[0];
      }
    };
  }
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw EmptyInput("mean: empty tensor");
  return scale(sum(a), 1.0f / static_cast<float>(a.size()));
}

Tensor stop_gradient(const Tensor& a) { return a.detach(); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<float> probs(n * k);
  double total = 0.0;
  std::size_t valid = 0;
  const float* pl = logits.data().data();
  for (std::size_t r = 0; r < n; ++r) {
    const float* x = pl + r * k;
    const float mx = *std::max_element(x, x + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(x[j] - mx));
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = static_cast<float>(std::exp(static_cast<double>(x[j] - mx)) / z);
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= k) {
      throw RangeError("cross_entropy: target " + std::to_string(targets[r]) + " >= " + std::to_string(k));
    }
    total += std::log(z) + mx - x[targets[r]];
    ++valid;
  }
  if (valid == 0) throw EmptyInput("cross_entropy: no valid targets");
  auto out = make_node({}, {&logits});
  out->data[0] = static_cast<float>(total / static_cast<double>(valid));
  if (out->requires_grad) {
    out->backward = [l_node = logits.ptr(), probs = std::move(probs),
                     tgt = std::vector<int>(targets.begin(), targets.end()), n, k, valid](Node& self) {
      float* g = grad_of(l_node);
      if (!g) return;
      const float s = self.grad[0] / static_cast<float>(valid);
      for (std::size_t r = 0; r < n; ++r) {
        if (tgt[r] < 0) continue;
        for (std::size_t j = 0; j < k; ++j) g[r * k + j] += s * probs[r * k + j];
        g[r * k + static_cast<std::size_t>(tgt[r])] -= s;
      }
    };
  }
  return Tensor(out);
}

}  // namespace dyad::ad
