// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fcnet/tensor.hpp"

namespace fcnet::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded value in the dynamic graph. Leaves are parameters or
/// constants; interior nodes carry the closure that pushes their gradient
/// into their inputs.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;
  bool leaf = true;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimizers and checkpoint loading; leaves only.
  Tensor& mutable_value();
  const Tensor& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad();

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables graph recording on the current thread for its lifetime.
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

/// Creates an op result. `backprop` receives the result node and must
/// accumulate into `self.inputs[i]->grad_buffer()` for inputs that require grad.
/// Recording is skipped when no input requires grad or grad is disabled.
Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop);

/// Reverse pass from a single-element output. Interior gradients are reset
/// first; leaf gradients accumulate until zero_grad().
void backward(const Var& output);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

Var conv2d(const Var& input, const Var& weight, const Var& bias, Conv2dOptions opt = {});
Var bilinear_resize(const Var& input, int out_h, int out_w);
Var leaky_relu(const Var& input, float slope);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var add_scalar(const Var& a, float s);

// Channel broadcasting against an N×1×H×W operand.
Var mul_channels(const Var& a, const Var& g);
Var div_channels(const Var& a, const Var& g);
Var channel_mean(const Var& a);

/// Mean over the (2r+1)² window clipped to the image.
Var box_filter(const Var& a, int radius);

// Batch-axis reductions. Sums are taken in a canonical (sorted) order so the
// result does not depend on the order of images in the batch.
Var softmax_batch(const Var& logits);
Var sum_batch(const Var& a);
Var mean_batch(const Var& a);
Var repeat_batch(const Var& a, int count);

Var concat_channels(const Var& a, const Var& b);
/// 2×2 max pooling with stride 2; odd extents keep a partial last window.
Var max_pool2(const Var& a);

Var sum(const Var& a);
/// Σ |a − target|.
Var l1_distance(const Var& a, const Tensor& target);

// Forward-only helpers shared with non-differentiable code paths.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      Conv2dOptions opt);
Tensor bilinear_resize_forward(const Tensor& input, int out_h, int out_w);
int conv_output_extent(int in, int kernel, Conv2dOptions opt);

}  // namespace fcnet::ad
