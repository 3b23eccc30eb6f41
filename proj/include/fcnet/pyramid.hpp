// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "fcnet/autodiff.hpp"
#include "fcnet/optim.hpp"

namespace fcnet {

/// Laplacian decomposition of an NCHW tensor. `details[i]` holds level i+1
/// (full resolution first); `base` is the coarsest low-pass level.
struct LaplacianStack {
  std::vector<Tensor> details;
  Tensor base;

  int depth() const { return static_cast<int>(details.size()) + 1; }
};

/// Gaussian pyramid levels, finest first; levels[0] is the source image.
struct PyramidTarget {
  std::vector<Tensor> levels;

  int depth() const { return static_cast<int>(levels.size()); }
};

/// Extent of pyramid level `level` (1-based) for a full-resolution extent.
int level_extent(int full, int level);

/// 5-tap binomial blur with reflect-101 borders followed by 2× decimation.
/// Axes of length 1 pass through unchanged.
Tensor blur_downsample(const Tensor& image);

/// Fixed Burt–Adelson expansion of `coarse` onto a target grid whose
/// ceil-halved extents equal the coarse extents.
Tensor pyramid_expand(const Tensor& coarse, int out_h, int out_w);

LaplacianStack lp_decompose(const Tensor& image, int depth);
Tensor lp_reconstruct(const LaplacianStack& stack);
PyramidTarget gaussian_pyramid(const Tensor& image, int depth);

/// Learned ×2 upsampler: bilinear resize to the finer grid, then a 3×3
/// 3→3 convolution.
class LearnedUpsampler {
 public:
  LearnedUpsampler() = default;
  LearnedUpsampler(ParameterSet& params, const std::string& prefix, std::mt19937_64& rng);

  ad::Var apply(const ad::Var& coarse, int out_h, int out_w) const;
  /// Sets the conv to a centered delta kernel and zero bias.
  void set_identity();

  const ad::Var& weight() const { return weight_; }
  const ad::Var& bias() const { return bias_; }

 private:
  ad::Var weight_;
  ad::Var bias_;
};

/// Next-level base sequence: f_up(output) + details_k for each frame k.
/// `output` is 1×3×h×w; `details` is K×3×H×W.
ad::Var compose_base(const ad::Var& output, const Tensor& details, const LearnedUpsampler& upsampler);

}  // namespace fcnet
