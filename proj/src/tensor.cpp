// SPDX-License-Identifier: Apache-2.0
#include "moelab/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace moelab {

namespace {
int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->v.assign(static_cast<size_t>(shape_size(shape)), 0.0f);
  t.s_->shape = std::move(shape);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<float> values,
                    bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(values.size()))
    throw std::invalid_argument("tensor shape does not match value count");
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->v = std::move(values);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar_value(float v) { return from({1}, {v}); }

float Tensor::scalar() const {
  if (!is_scalar()) throw std::invalid_argument("tensor is not a scalar");
  return s_->v[0];
}

std::span<float> Tensor::grad() {
  if (s_->g.empty()) s_->g.assign(s_->v.size(), 0.0f);
  return {s_->g.data(), s_->g.size()};
}

void Tensor::zero_grad() {
  if (!s_->g.empty()) std::fill(s_->g.begin(), s_->g.end(), 0.0f);
}

void Tensor::drop_grad() { s_->g.clear(); }

bool Tensor::all_finite() const {
  for (float x : s_->v)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tape::backward(Tensor root) {
  if (!root.defined() || !root.is_scalar())
    throw std::invalid_argument("backward root must be a scalar tensor");
  root.grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace moelab
