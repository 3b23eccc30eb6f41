// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fcnet/tensor.hpp"

namespace fcnet {

/// Returned by psnr() when the clamped images are identical.
inline constexpr double kPsnrCap = 100.0;

/// 10·log10(1 / MSE) over all channels and pixels after clamping to [0, 1].
double psnr(const Tensor& x, const Tensor& y);

/// Mean SSIM over the valid 11×11 window grid (Gaussian σ = 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1), averaged over channels.
/// Inputs are clamped to [0, 1] and must be 1×C×H×W.
double ssim(const Tensor& x, const Tensor& y);

}  // namespace fcnet
