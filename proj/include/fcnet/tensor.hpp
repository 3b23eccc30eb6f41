// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents or channel counts that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its valid domain (negative radius, empty sequence, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed manifest, config or checkpoint contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

std::string to_string(const Shape& shape);

/// Dense row-major float tensor. Images use NCHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor image(int n, int c, int h, int w, float fill = 0.0f) {
    return Tensor({n, c, h, w}, fill);
  }
  static Tensor scalar(float v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // NCHW accessors; only meaningful for rank-4 tensors.
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  std::size_t plane() const { return static_cast<std::size_t>(h()) * w(); }

  float& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const float& at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  /// Returns image `index` of the batch as a 1×C×H×W tensor.
  Tensor slice_batch(int index) const;
  Tensor reshaped(Shape shape) const;
  void fill(float v);

  float item() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::size_t numel_of(const Shape& shape);

/// Stacks 1×C×H×W tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> frames);

void require_rank4(const Tensor& t, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

float max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace fcnet
