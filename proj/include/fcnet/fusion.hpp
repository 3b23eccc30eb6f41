// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fcnet/autodiff.hpp"
#include "fcnet/optim.hpp"

namespace fcnet {

struct FusionBlockConfig {
  int m = 4;                 // dilated intermediate layers
  int channels = 24;
  int downsample_factor = 4; // low-res execution grid is 1/factor per side
  int min_lowres = 8;        // never shrink a side below this
  int guided_radius = 2;
  float guided_eps = 1e-4f;
  float leaky_slope = 0.1f;

  void validate() const;

  bool operator==(const FusionBlockConfig&) const = default;
};

/// Side length the weight-prediction net runs at for a level side `full`.
int fusion_lowres_extent(int full, const FusionBlockConfig& cfg);

/// One conv layer of the weight-prediction net.
struct ConvSpec {
  int in_channels;
  int out_channels;
  int kernel;
  int padding;
  int dilation;
};

/// Layer table of the weight-prediction net: a 3×3 entry conv, m dilated
/// 3×3 layers with dilation 2l, one plain 3×3 layer and a 1×1 projection to
/// three channels.
std::vector<ConvSpec> fusion_layer_specs(const FusionBlockConfig& cfg);

/// Per-level weight prediction net, shared across the frames of a level.
class WeightNet {
 public:
  WeightNet() = default;
  WeightNet(ParameterSet& params, const std::string& prefix, const FusionBlockConfig& cfg,
            std::mt19937_64& rng);

  /// K×3×h×w low-resolution frames → K×3×h×w logits.
  ad::Var operator()(const ad::Var& frames) const;

  const FusionBlockConfig& config() const { return cfg_; }

 private:
  FusionBlockConfig cfg_;
  std::vector<ConvSpec> specs_;
  std::vector<std::pair<ad::Var, ad::Var>> layers_;
};

/// Fast guided filter used for joint upsampling: linear coefficients are
/// solved on the low-resolution grid against the downsampled guide, box
/// averaged, bilinearly upsampled and applied to the full-resolution guide.
/// Multi-channel guides are reduced to their channel mean.
ad::Var guided_upsample(const ad::Var& lowres, const ad::Var& guide_full, int radius, float eps);

/// Σ_k weights_k ⊙ frames_k, reduced over the batch axis.
ad::Var fuse(const ad::Var& frames, const ad::Var& weights);

struct FusionOutput {
  ad::Var fused;    // 1×3×H×W
  ad::Var weights;  // K×3×H×W, softmax-normalized across frames
  ad::Var logits;   // K×3×h×w at the low-res grid
};

class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(ParameterSet& params, const std::string& prefix, const FusionBlockConfig& cfg,
              std::mt19937_64& rng);

  FusionOutput operator()(const ad::Var& frames) const;

  const WeightNet& net() const { return net_; }
  const FusionBlockConfig& config() const { return net_.config(); }

 private:
  WeightNet net_;
};

}  // namespace fcnet
