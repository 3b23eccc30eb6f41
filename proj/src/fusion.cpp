// SPDX-License-Identifier: Apache-2.0

#include "fcnet/fusion.hpp"

#include <algorithm>

namespace fcnet {

void FusionBlockConfig::validate() const {
  if (m < 0) throw InvalidArgument("fusion: m must be >= 0");
  if (channels < 1) throw InvalidArgument("fusion: channels must be >= 1");
  if (downsample_factor < 1) throw InvalidArgument("fusion: downsample_factor must be >= 1");
  if (min_lowres < 8) throw InvalidArgument("fusion: min_lowres must be >= 8");
  if (guided_radius <= 0) throw InvalidArgument("fusion: guided radius must be > 0");
  if (!(guided_eps > 0.0f)) throw InvalidArgument("fusion: guided eps must be > 0");
}

int fusion_lowres_extent(int full, const FusionBlockConfig& cfg) {
  if (full <= cfg.min_lowres) return full;
  const int reduced = (full + cfg.downsample_factor - 1) / cfg.downsample_factor;
  return std::max(reduced, cfg.min_lowres);
}

std::vector<ConvSpec> fusion_layer_specs(const FusionBlockConfig& cfg) {
  const int c = cfg.channels;
  std::vector<ConvSpec> specs{{3, c, 3, 1, 1}};
  for (int l = 1; l <= cfg.m; ++l) specs.push_back({c, c, 3, 2 * l, 2 * l});
  specs.push_back({c, c, 3, 1, 1});
  specs.push_back({c, 3, 1, 0, 1});
  return specs;
}

WeightNet::WeightNet(ParameterSet& params, const std::string& prefix, const FusionBlockConfig& cfg,
                     std::mt19937_64& rng)
    : cfg_(cfg), specs_(fusion_layer_specs(cfg)) {
  cfg.validate();
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ConvSpec& s = specs_[i];
    const std::string name = prefix + ".conv" + std::to_string(i);
    const int fan_in = s.in_channels * s.kernel * s.kernel;
    ad::Var w = params.add(name + ".weight",
                           kaiming_normal({s.out_channels, s.in_channels, s.kernel, s.kernel}, fan_in, rng));
    ad::Var b = params.add(name + ".bias", Tensor({s.out_channels}));
    layers_.emplace_back(w, b);
  }
}

ad::Var WeightNet::operator()(const ad::Var& frames) const {
  const Tensor& v = frames.value();
  require_rank4(v, "fusion weights");
  if (v.n() < 1) throw InvalidArgument("fusion: empty frame sequence");
  if (v.c() != 3) throw ShapeError("fusion: frames must have 3 channels, got " + to_string(v.shape()));
  ad::Var x = frames;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const ConvSpec& s = specs_[i];
    x = ad::conv2d(x, layers_[i].first, layers_[i].second, {1, s.padding, s.dilation});
    if (i + 1 < layers_.size()) x = ad::leaky_relu(x, cfg_.leaky_slope);
  }
  return x;
}

ad::Var guided_upsample(const ad::Var& lowres, const ad::Var& guide_full, int radius, float eps) {
  if (radius <= 0) throw InvalidArgument("guided_upsample: radius must be > 0");
  if (!(eps > 0.0f)) throw InvalidArgument("guided_upsample: eps must be > 0");
  const Tensor& p = lowres.value();
  const Tensor& g = guide_full.value();
  require_rank4(p, "guided_upsample");
  require_rank4(g, "guided_upsample");
  if (p.n() != g.n()) throw ShapeError("guided_upsample: map and guide batch differ");
  if (p.h() > g.h() || p.w() > g.w())
    throw ShapeError("guided_upsample: low-res map " + to_string(p.shape()) +
                     " larger than guide " + to_string(g.shape()));

  ad::Var guide = g.c() == 1 ? guide_full : ad::channel_mean(guide_full);
  ad::Var guide_lr = (p.h() == g.h() && p.w() == g.w()) ? guide : ad::bilinear_resize(guide, p.h(), p.w());
  // The output is invariant to shifting the guide by a constant; centering it
  // keeps E[I²] − E[I]² from cancelling in float32.
  double mu = 0.0;
  for (float v : guide_lr.value().values()) mu += v;
  const auto shift = static_cast<float>(-mu / static_cast<double>(guide_lr.value().numel()));
  guide = ad::add_scalar(guide, shift);
  guide_lr = ad::add_scalar(guide_lr, shift);

  ad::Var mean_i = ad::box_filter(guide_lr, radius);
  ad::Var mean_p = ad::box_filter(lowres, radius);
  ad::Var corr_ip = ad::box_filter(ad::mul_channels(lowres, guide_lr), radius);
  ad::Var corr_ii = ad::box_filter(ad::mul(guide_lr, guide_lr), radius);
  ad::Var var_i = ad::sub(corr_ii, ad::mul(mean_i, mean_i));
  ad::Var cov_ip = ad::sub(corr_ip, ad::mul_channels(mean_p, mean_i));
  ad::Var a = ad::div_channels(cov_ip, ad::add_scalar(var_i, eps));
  ad::Var b = ad::sub(mean_p, ad::mul_channels(a, mean_i));
  ad::Var mean_a = ad::box_filter(a, radius);
  ad::Var mean_b = ad::box_filter(b, radius);
  if (p.h() != g.h() || p.w() != g.w()) {
    mean_a = ad::bilinear_resize(mean_a, g.h(), g.w());
    mean_b = ad::bilinear_resize(mean_b, g.h(), g.w());
  }
  return ad::add(ad::mul_channels(mean_a, guide), mean_b);
}

ad::Var fuse(const ad::Var& frames, const ad::Var& weights) {
  const Tensor& f = frames.value();
  const Tensor& w = weights.value();
  require_rank4(f, "fuse");
  require_rank4(w, "fuse");
  if (f.n() != w.n())
    throw ShapeError("fuse: " + std::to_string(w.n()) + " weight maps for " + std::to_string(f.n()) + " frames");
  require_same_shape(f, w, "fuse");
  return ad::sum_batch(ad::mul(weights, frames));
}

FusionBlock::FusionBlock(ParameterSet& params, const std::string& prefix, const FusionBlockConfig& cfg,
                         std::mt19937_64& rng)
    : net_(params, prefix, cfg, rng) {}

FusionOutput FusionBlock::operator()(const ad::Var& frames) const {
  const FusionBlockConfig& cfg = config();
  const Tensor& v = frames.value();
  require_rank4(v, "fusion block");
  const int lh = fusion_lowres_extent(v.h(), cfg);
  const int lw = fusion_lowres_extent(v.w(), cfg);
  ad::Var small = (lh == v.h() && lw == v.w()) ? frames : ad::bilinear_resize(frames, lh, lw);
  FusionOutput out;
  out.logits = net_(small);
  out.weights = ad::softmax_batch(guided_upsample(out.logits, frames, cfg.guided_radius, cfg.guided_eps));
  out.fused = fuse(frames, out.weights);
  return out;
}

}  // namespace fcnet
