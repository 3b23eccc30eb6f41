// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "fcnet/autodiff.hpp"
#include "fcnet/pyramid.hpp"

namespace fcnet {

struct SpatialLossConfig {
  int region_size = 4;
};

/// Which terms enter the total loss. `spatial_final_only` restricts the
/// spatial term to level 1.
struct LossTerms {
  bool reconstruction = true;
  bool pyramid = true;
  bool spatial = true;
  bool spatial_final_only = false;

  static LossTerms from_name(const std::string& name);
  std::string name() const;
};

struct LossWeights {
  float lambda_ps = 4000.0f;
};

double pyramid_reconstruction_weight(int level);
double spatial_level_weight(int level, int depth);

/// Σ_p |O¹(p) − G(p)|.
ad::Var loss_r(const ad::Var& output, const Tensor& truth);

/// Σ_{i=2..n} 2^{i−2} Σ_p |Oⁱ − Gⁱ|; `outputs[i-1]` is level i.
ad::Var loss_pr(std::span<const ad::Var> outputs, const PyramidTarget& target);

/// Region means of the channel-averaged image on a grid of region_size
/// squares; border regions average over the pixels they cover.
ad::Var region_means(const ad::Var& image, int region_size);

/// (1/M) Σ_j Σ_{h∈Ω(j)} (|O_h − O_j| − |G_h − G_j|)² for one level, with Ω the
/// 4-connected neighbours present in the grid.
ad::Var spatial_consistency(const ad::Var& output, const Tensor& truth, const SpatialLossConfig& cfg);

/// Σ_i 4^{n−i} spatial_consistency(Oⁱ, Gⁱ) over levels in [first, last].
ad::Var loss_ps(std::span<const ad::Var> outputs, const PyramidTarget& target, const SpatialLossConfig& cfg,
                int first_level = 1, int last_level = -1);

struct LossBreakdown {
  ad::Var total;
  double reconstruction = 0.0;
  double pyramid = 0.0;
  double spatial = 0.0;
};

LossBreakdown total_loss(std::span<const ad::Var> outputs, const PyramidTarget& target, const LossWeights& weights,
                         const SpatialLossConfig& spatial, const LossTerms& terms = {});

}  // namespace fcnet
