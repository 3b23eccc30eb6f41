// SPDX-License-Identifier: Apache-2.0

#include "fcnet/model.hpp"

#include <algorithm>

namespace fcnet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::FusionOnly: return "fusion_only";
    case Variant::CorrectionOnly: return "correction_only";
  }
  return "?";
}

std::string to_string(BlockOrder o) {
  return o == BlockOrder::FuseThenCorrect ? "fuse_then_correct" : "correct_then_fuse_level_n_only";
}

std::string to_string(SizePreset p) {
  switch (p) {
    case SizePreset::LargeToSmall: return "large_small";
    case SizePreset::SmallToSmall: return "small_small";
    case SizePreset::SmallToLarge: return "small_large";
    case SizePreset::LargeToLarge: return "large_large";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "fusion_only") return Variant::FusionOnly;
  if (s == "correction_only") return Variant::CorrectionOnly;
  throw InvalidArgument("unknown variant: " + s);
}

BlockOrder parse_order(const std::string& s) {
  if (s == "fuse_then_correct") return BlockOrder::FuseThenCorrect;
  if (s == "correct_then_fuse_level_n_only" || s == "correct_then_fuse") return BlockOrder::CorrectThenFuseLevelN;
  throw InvalidArgument("unknown block order: " + s);
}

SizePreset parse_size_preset(const std::string& s) {
  if (s == "large_small") return SizePreset::LargeToSmall;
  if (s == "small_small") return SizePreset::SmallToSmall;
  if (s == "small_large") return SizePreset::SmallToLarge;
  if (s == "large_large") return SizePreset::LargeToLarge;
  throw InvalidArgument("unknown size preset: " + s);
}

ModelConfig ModelConfig::reference() { return preset(SizePreset::LargeToSmall, 4); }

ModelConfig ModelConfig::preset(SizePreset preset, int depth) {
  if (depth < 1 || depth > 4) throw InvalidArgument("size presets cover depths 1..4");
  const CorrectionBlockConfig large{4, 24}, mid{4, 16}, small{3, 16};
  std::vector<int> m;
  std::vector<CorrectionBlockConfig> corr;
  switch (preset) {
    case SizePreset::LargeToSmall:
      m = {4, 3, 2, 1};
      corr = build_correction_schedule(4);
      break;
    case SizePreset::SmallToSmall:
      m = {1, 1, 1, 1};
      corr = {small, small, small, small};
      break;
    case SizePreset::SmallToLarge:
      m = {1, 2, 3, 4};
      corr = {small, small, mid, large};
      break;
    case SizePreset::LargeToLarge:
      m = {4, 4, 4, 4};
      corr = {large, large, large, large};
      break;
  }
  ModelConfig cfg;
  cfg.depth = depth;
  cfg.fusion_m.assign(m.begin(), m.begin() + depth);
  cfg.correction.assign(corr.begin(), corr.begin() + depth);
  return cfg;
}

FusionBlockConfig ModelConfig::fusion_for(int level) const {
  FusionBlockConfig f = fusion;
  f.m = fusion_m.at(static_cast<std::size_t>(depth - level));
  f.leaky_slope = leaky_slope;
  return f;
}

CorrectionBlockConfig ModelConfig::correction_for(int level) const {
  CorrectionBlockConfig c = correction.at(static_cast<std::size_t>(depth - level));
  c.leaky_slope = leaky_slope;
  c.global_residual = global_residual;
  return c;
}

int ModelConfig::min_input_extent() const {
  int need = 1 << (depth - 1);
  if (uses_correction()) {
    for (int level = 1; level <= depth; ++level) {
      // A side s reaches level i as ceil(s / 2^(i-1)); solve for the smallest s.
      const int at_level = correction_for(level).min_extent();
      need = std::max(need, ((at_level - 1) << (level - 1)) + 1);
    }
  }
  return need;
}

bool ModelConfig::operator==(const ModelConfig& other) const {
  if (depth != other.depth || fusion_m != other.fusion_m || variant != other.variant || order != other.order ||
      leaky_slope != other.leaky_slope || global_residual != other.global_residual ||
      correction.size() != other.correction.size())
    return false;
  for (std::size_t i = 0; i < correction.size(); ++i)
    if (correction[i].levels != other.correction[i].levels ||
        correction[i].base_channels != other.correction[i].base_channels)
      return false;
  FusionBlockConfig a = fusion, b = other.fusion;
  a.leaky_slope = b.leaky_slope = leaky_slope;
  a.m = b.m = 0;
  return a == b;
}

void ModelConfig::validate() const {
  if (depth < 1) throw InvalidArgument("model: depth must be >= 1");
  if (static_cast<int>(fusion_m.size()) != depth)
    throw InvalidArgument("model: fusion_m needs " + std::to_string(depth) + " entries");
  if (static_cast<int>(correction.size()) != depth)
    throw InvalidArgument("model: correction schedule needs " + std::to_string(depth) + " entries");
  for (int level = 1; level <= depth; ++level) {
    fusion_for(level).validate();
    correction_for(level).validate();
  }
  if (order == BlockOrder::CorrectThenFuseLevelN && variant != Variant::Full)
    throw InvalidArgument("model: correct_then_fuse requires the full variant");
}

void ExposureSequence::validate() const {
  if (frames.empty()) throw InvalidArgument("exposure sequence is empty");
  if (!ev_tags.empty() && ev_tags.size() != frames.size())
    throw InvalidArgument("exposure sequence: ev tag count differs from frame count");
  const Tensor& first = frames.front();
  for (const Tensor& f : frames) {
    require_rank4(f, "exposure sequence");
    if (f.n() != 1 || f.c() != 3) throw ShapeError("exposure frames must be 1x3xHxW");
    if (f.h() != first.h() || f.w() != first.w())
      throw ShapeError("exposure frames differ in extents: " + to_string(first.shape()) + " vs " +
                       to_string(f.shape()));
  }
}

Tensor ExposureSequence::stacked() const {
  validate();
  return stack_batch(frames);
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int n = config_.depth;
  fusion_.resize(static_cast<std::size_t>(n));
  correction_.resize(static_cast<std::size_t>(n));
  upsamplers_.resize(static_cast<std::size_t>(n));
  for (int level = n; level >= 1; --level) {
    const std::string tag = "l" + std::to_string(level);
    const auto idx = static_cast<std::size_t>(level - 1);
    if (config_.uses_fusion()) fusion_[idx].emplace(params_, "fuse." + tag, config_.fusion_for(level), rng);
    if (config_.uses_correction())
      correction_[idx].emplace(params_, "correct." + tag, config_.correction_for(level), rng);
    if (level > 1) upsamplers_[idx].emplace(params_, "up." + tag, rng);
  }
}

const FusionBlock& Model::fusion_block(int level) const {
  const auto& b = fusion_.at(static_cast<std::size_t>(level - 1));
  if (!b) throw InvalidArgument("model has no fusion block at level " + std::to_string(level));
  return *b;
}

const CorrectionBlock& Model::correction_block(int level) const {
  const auto& b = correction_.at(static_cast<std::size_t>(level - 1));
  if (!b) throw InvalidArgument("model has no correction block at level " + std::to_string(level));
  return *b;
}

const LearnedUpsampler& Model::upsampler(int level) const {
  const auto& b = upsamplers_.at(static_cast<std::size_t>(level - 1));
  if (!b) throw InvalidArgument("model has no upsampler at level " + std::to_string(level));
  return *b;
}

ForwardResult Model::forward(const Tensor& frames) const {
  require_rank4(frames, "forward");
  if (frames.n() < 1) throw InvalidArgument("forward: empty exposure sequence");
  if (frames.c() != 3) throw ShapeError("forward: frames must have 3 channels");
  const int n = config_.depth;
  const int min_side = config_.min_input_extent();
  if (frames.h() < min_side || frames.w() < min_side)
    throw ShapeError("forward: input " + std::to_string(frames.h()) + "x" + std::to_string(frames.w()) +
                     " below the minimum side " + std::to_string(min_side) + " for this configuration");

  const LaplacianStack stack = lp_decompose(frames, n);
  ForwardResult result;
  result.outputs.resize(static_cast<std::size_t>(n));
  result.fused.resize(static_cast<std::size_t>(n));

  ad::Var base = ad::Var::constant(stack.base);
  for (int level = n; level >= 1; --level) {
    const auto idx = static_cast<std::size_t>(level - 1);
    ad::Var out;
    switch (config_.variant) {
      case Variant::Full:
        if (level == n && config_.order == BlockOrder::CorrectThenFuseLevelN) {
          out = fusion_block(level)(correction_block(level)(base)).fused;
          result.fused[idx] = out;
        } else {
          result.fused[idx] = fusion_block(level)(base).fused;
          out = correction_block(level)(result.fused[idx]);
        }
        break;
      case Variant::FusionOnly:
        out = fusion_block(level)(base).fused;
        result.fused[idx] = out;
        break;
      case Variant::CorrectionOnly:
        out = ad::mean_batch(correction_block(level)(base));
        break;
    }
    result.outputs[idx] = out;
    if (level > 1) base = compose_base(out, stack.details[idx - 1], upsampler(level));
  }
  result.output = result.outputs.front();
  return result;
}

namespace {

std::uint64_t conv_params(int in, int out, int k) {
  return static_cast<std::uint64_t>(in) * out * k * k + static_cast<std::uint64_t>(out);
}

std::uint64_t conv_macs(int in, int out, int k, int h, int w) {
  return static_cast<std::uint64_t>(in) * out * k * k * static_cast<std::uint64_t>(h) * w;
}

std::uint64_t correction_params(const CorrectionBlockConfig& c) {
  std::uint64_t p = 0;
  int in = 3;
  for (int e = 0; e < c.levels; ++e) {
    p += conv_params(in, c.channels_at(e), 3) + conv_params(c.channels_at(e), c.channels_at(e), 3);
    in = c.channels_at(e);
  }
  for (int e = c.levels - 2; e >= 0; --e) {
    const int ch = c.channels_at(e);
    p += conv_params(c.channels_at(e + 1), ch, 3) + conv_params(2 * ch, ch, 3) + conv_params(ch, ch, 3);
  }
  return p + conv_params(c.channels_at(0), 3, 3);
}

std::uint64_t correction_macs(const CorrectionBlockConfig& c, int h, int w) {
  std::vector<std::pair<int, int>> ext{{h, w}};
  for (int e = 1; e < c.levels; ++e) ext.emplace_back((ext.back().first + 1) / 2, (ext.back().second + 1) / 2);
  std::uint64_t f = 0;
  int in = 3;
  for (int e = 0; e < c.levels; ++e) {
    const auto [eh, ew] = ext[static_cast<std::size_t>(e)];
    const int ch = c.channels_at(e);
    f += conv_macs(in, ch, 3, eh, ew) + conv_macs(ch, ch, 3, eh, ew);
    in = ch;
  }
  for (int e = c.levels - 2; e >= 0; --e) {
    const auto [eh, ew] = ext[static_cast<std::size_t>(e)];
    const int ch = c.channels_at(e);
    f += conv_macs(c.channels_at(e + 1), ch, 3, eh, ew) + conv_macs(2 * ch, ch, 3, eh, ew) +
         conv_macs(ch, ch, 3, eh, ew);
  }
  return f + conv_macs(c.channels_at(0), 3, 3, h, w);
}

}  // namespace

std::uint64_t count_params(const ModelConfig& config) {
  config.validate();
  std::uint64_t total = 0;
  for (int level = config.depth; level >= 1; --level) {
    if (config.uses_fusion())
      for (const ConvSpec& s : fusion_layer_specs(config.fusion_for(level)))
        total += conv_params(s.in_channels, s.out_channels, s.kernel);
    if (config.uses_correction()) total += correction_params(config.correction_for(level));
    if (level > 1) total += conv_params(3, 3, 3);
  }
  return total;
}

std::uint64_t count_flops(const ModelConfig& config, int frames, int h, int w) {
  config.validate();
  if (frames < 1 || h < 1 || w < 1) throw InvalidArgument("count_flops: frames and extents must be >= 1");
  std::uint64_t total = 0;
  for (int level = config.depth; level >= 1; --level) {
    const int lh = level_extent(h, level), lw = level_extent(w, level);
    if (config.uses_fusion()) {
      const FusionBlockConfig f = config.fusion_for(level);
      const int sh = fusion_lowres_extent(lh, f), sw = fusion_lowres_extent(lw, f);
      for (const ConvSpec& s : fusion_layer_specs(f))
        total += static_cast<std::uint64_t>(frames) * conv_macs(s.in_channels, s.out_channels, s.kernel, sh, sw);
    }
    if (config.uses_correction()) {
      const bool per_frame = config.variant == Variant::CorrectionOnly ||
                             (level == config.depth && config.order == BlockOrder::CorrectThenFuseLevelN);
      total += static_cast<std::uint64_t>(per_frame ? frames : 1) * correction_macs(config.correction_for(level), lh, lw);
    }
    if (level > 1) total += conv_macs(3, 3, 3, level_extent(h, level - 1), level_extent(w, level - 1));
  }
  return total;
}

}  // namespace fcnet
