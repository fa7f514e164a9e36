// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace moelab {

// Dense row-major float32 tensor with an optional gradient buffer of the
// same shape. Tensor is a cheap handle; copies share storage. Values are
// written once when an operation produces the tensor (leaf parameters are
// additionally updated in place by the optimizer); gradients accumulate.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar_value(float v);

  bool defined() const { return s_ != nullptr; }
  const std::vector<int>& shape() const { return s_->shape; }
  int64_t size() const { return static_cast<int64_t>(s_->v.size()); }

  // 2-D view: cols = last dimension, rows = everything else.
  int cols() const { return s_->shape.empty() ? 1 : s_->shape.back(); }
  int rows() const { return static_cast<int>(size()) / cols(); }
  bool same_shape(const Tensor& o) const { return s_->shape == o.s_->shape; }
  bool is_scalar() const { return size() == 1; }

  std::span<float> values() { return {s_->v.data(), s_->v.size()}; }
  std::span<const float> values() const { return {s_->v.data(), s_->v.size()}; }
  float scalar() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool b) { s_->requires_grad = b; }

  // Gradient buffer, allocated (zeroed) on first use.
  std::span<float> grad();
  bool has_grad() const { return s_ && !s_->g.empty(); }
  void zero_grad();
  void drop_grad();

  bool all_finite() const;
  bool shares_storage(const Tensor& o) const { return s_ == o.s_; }

private:
  struct Storage {
    std::vector<int> shape;
    std::vector<float> v;
    std::vector<float> g;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

// Reverse-mode tape. Operations append their backward rules in execution
// order, so inputs always precede consumers and a single reverse sweep is
// a valid topological traversal visiting each node exactly once. One tape
// belongs to one logical thread; run independent tapes for parallel work.
class Tape {
public:
  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  // Seeds d(root)/d(root) = 1 and replays all recorded rules in reverse.
  // Calling again without clearing accumulates into existing gradients.
  void backward(Tensor root);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

private:
  std::vector<std::function<void()>> nodes_;
};

}  // namespace moelab
