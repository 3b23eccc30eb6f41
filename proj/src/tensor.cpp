// SPDX-License-Identifier: Apache-2.0

#include "fcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fcnet {

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + to_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel_of(shape_))
    throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
}

Tensor Tensor::slice_batch(int index) const {
  require_rank4(*this, "slice_batch");
  if (index < 0 || index >= n()) throw InvalidArgument("batch index out of range");
  const std::size_t len = static_cast<std::size_t>(c()) * plane();
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(index * len),
                         data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * len));
  return Tensor({1, c(), h(), w()}, std::move(out));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel_of(shape) != numel())
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor stack_batch(std::span<const Tensor> frames) {
  if (frames.empty()) throw InvalidArgument("stack_batch: empty frame list");
  const Tensor& first = frames.front();
  require_rank4(first, "stack_batch");
  std::vector<float> data;
  data.reserve(first.numel() * frames.size());
  int total = 0;
  for (const Tensor& f : frames) {
    require_rank4(f, "stack_batch");
    if (f.c() != first.c() || f.h() != first.h() || f.w() != first.w())
      throw ShapeError("stack_batch: frames " + to_string(first.shape()) + " and " +
                       to_string(f.shape()) + " differ");
    data.insert(data.end(), f.values().begin(), f.values().end());
    total += f.n();
  }
  return Tensor({total, first.c(), first.h(), first.w()}, std::move(data));
}

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4)
    throw ShapeError(std::string(what) + ": expected NCHW tensor, got " + to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace fcnet
