// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fcnet/correction.hpp"
#include "fcnet/fusion.hpp"
#include "fcnet/optim.hpp"
#include "fcnet/pyramid.hpp"

namespace fcnet {

enum class Variant { Full, FusionOnly, CorrectionOnly };
enum class BlockOrder { FuseThenCorrect, CorrectThenFuseLevelN };

/// Size schedules compared in the block-size ablation.
enum class SizePreset { LargeToSmall, SmallToSmall, SmallToLarge, LargeToLarge };

std::string to_string(Variant v);
std::string to_string(BlockOrder o);
std::string to_string(SizePreset p);
Variant parse_variant(const std::string& s);
BlockOrder parse_order(const std::string& s);
SizePreset parse_size_preset(const std::string& s);

struct ModelConfig {
  int depth = 4;
  /// Per-level lists run from the coarsest level (n) to the finest (1).
  std::vector<int> fusion_m = {4, 3, 2, 1};
  std::vector<CorrectionBlockConfig> correction = build_correction_schedule(4);
  Variant variant = Variant::Full;
  BlockOrder order = BlockOrder::FuseThenCorrect;
  FusionBlockConfig fusion;  // m is taken from fusion_m
  float leaky_slope = 0.1f;
  bool global_residual = true;

  static ModelConfig reference();
  /// Block-size preset truncated to the first `depth` levels.
  static ModelConfig preset(SizePreset preset, int depth = 4);

  FusionBlockConfig fusion_for(int level) const;
  CorrectionBlockConfig correction_for(int level) const;
  bool uses_fusion() const { return variant != Variant::CorrectionOnly; }
  bool uses_correction() const { return variant != Variant::FusionOnly; }
  /// Smallest input side accepted by forward().
  int min_input_extent() const;
  void validate() const;

  /// Compares effective settings; the slope and residual copies inside the
  /// per-block configs are ignored because the model-wide fields override them.
  bool operator==(const ModelConfig& other) const;
};

/// K ≥ 1 frames of identical extents with values in [0, 1].
struct ExposureSequence {
  std::vector<Tensor> frames;  // each 1×3×H×W
  std::vector<double> ev_tags; // optional, parallel to frames

  int size() const { return static_cast<int>(frames.size()); }
  void validate() const;
  Tensor stacked() const;
};

struct ForwardResult {
  ad::Var output;                 // O^1
  std::vector<ad::Var> outputs;   // O^i at index i-1
  std::vector<ad::Var> fused;     // F^i at index i-1; undefined for correction-only
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  ForwardResult forward(const Tensor& frames) const;
  ForwardResult forward(const ExposureSequence& seq) const { return forward(seq.stacked()); }

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  const FusionBlock& fusion_block(int level) const;
  const CorrectionBlock& correction_block(int level) const;
  const LearnedUpsampler& upsampler(int level) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  // Indexed by level - 1.
  std::vector<std::optional<FusionBlock>> fusion_;
  std::vector<std::optional<CorrectionBlock>> correction_;
  std::vector<std::optional<LearnedUpsampler>> upsamplers_;
};

/// Scalar learnables implied by a config.
std::uint64_t count_params(const ModelConfig& config);

/// Multiply-accumulate count of every convolution for K frames of h×w.
/// Fusion nets are counted at their low-resolution execution extents.
std::uint64_t count_flops(const ModelConfig& config, int frames, int h, int w);

}  // namespace fcnet
