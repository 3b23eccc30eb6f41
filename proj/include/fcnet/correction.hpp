// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "fcnet/autodiff.hpp"
#include "fcnet/optim.hpp"

namespace fcnet {

struct CorrectionBlockConfig {
  int levels = 4;          // encoder resolutions
  int base_channels = 24;  // doubles per encoder level
  bool global_residual = true;
  float leaky_slope = 0.1f;

  int channels_at(int level) const { return base_channels << level; }
  /// Smallest input side the encoder accepts.
  int min_extent() const { return 1 << (levels - 1); }
  void validate() const;

  bool operator==(const CorrectionBlockConfig&) const = default;
};

/// Per-level correction configs for an n-level pyramid, coarsest level first.
std::vector<CorrectionBlockConfig> build_correction_schedule(int depth);

/// UNet-like correction block. Each encoder level runs two 3×3 convs and
/// halves resolution with 2×2 max pooling; each decoder level upsamples
/// bilinearly to the recorded encoder extents, applies a 3×3 conv,
/// concatenates the encoder feature and runs two 3×3 convs. A final linear
/// 3×3 conv maps to three channels; with global_residual the input is added.
class CorrectionBlock {
 public:
  CorrectionBlock() = default;
  CorrectionBlock(ParameterSet& params, const std::string& prefix, const CorrectionBlockConfig& cfg,
                  std::mt19937_64& rng);

  ad::Var operator()(const ad::Var& input) const;

  const CorrectionBlockConfig& config() const { return cfg_; }

 private:
  struct Conv {
    ad::Var weight;
    ad::Var bias;
  };
  struct EncoderStage {
    Conv conv0, conv1;
  };
  struct DecoderStage {
    Conv up, conv0, conv1;
  };

  ad::Var apply(const Conv& c, const ad::Var& x, bool activate) const;

  CorrectionBlockConfig cfg_;
  std::vector<EncoderStage> encoder_;
  std::vector<DecoderStage> decoder_;  // decoder_[e] produces encoder level e
  Conv out_;
};

}  // namespace fcnet
