// SPDX-License-Identifier: Apache-2.0

#include "fcnet/correction.hpp"

#include <algorithm>

namespace fcnet {

void CorrectionBlockConfig::validate() const {
  if (levels < 1) throw InvalidArgument("correction: levels must be >= 1");
  if (base_channels < 1) throw InvalidArgument("correction: base_channels must be >= 1");
}

std::vector<CorrectionBlockConfig> build_correction_schedule(int depth) {
  if (depth < 1) throw InvalidArgument("correction schedule: depth must be >= 1");
  static const std::vector<CorrectionBlockConfig> full = {{4, 24}, {4, 16}, {3, 16}, {3, 16}};
  std::vector<CorrectionBlockConfig> out;
  for (int i = 0; i < depth; ++i) out.push_back(full[static_cast<std::size_t>(std::min(i, 3))]);
  return out;
}

namespace {

struct ConvFactory {
  ParameterSet& params;
  std::mt19937_64& rng;

  template <typename Conv>
  Conv make(const std::string& name, int in, int out) {
    Conv c;
    c.weight = params.add(name + ".weight", kaiming_normal({out, in, 3, 3}, in * 9, rng));
    c.bias = params.add(name + ".bias", Tensor({out}));
    return c;
  }
};

}  // namespace

CorrectionBlock::CorrectionBlock(ParameterSet& params, const std::string& prefix,
                                 const CorrectionBlockConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg.validate();
  ConvFactory make{params, rng};
  int in = 3;
  for (int e = 0; e < cfg.levels; ++e) {
    const int c = cfg.channels_at(e);
    const std::string stage = prefix + ".enc" + std::to_string(e);
    EncoderStage s;
    s.conv0 = make.make<Conv>(stage + ".conv0", in, c);
    s.conv1 = make.make<Conv>(stage + ".conv1", c, c);
    encoder_.push_back(s);
    in = c;
  }
  decoder_.resize(static_cast<std::size_t>(cfg.levels - 1));
  for (int e = cfg.levels - 2; e >= 0; --e) {
    const int c = cfg.channels_at(e);
    const std::string stage = prefix + ".dec" + std::to_string(e);
    DecoderStage& s = decoder_[static_cast<std::size_t>(e)];
    s.up = make.make<Conv>(stage + ".up", cfg.channels_at(e + 1), c);
    s.conv0 = make.make<Conv>(stage + ".conv0", 2 * c, c);
    s.conv1 = make.make<Conv>(stage + ".conv1", c, c);
  }
  out_ = make.make<Conv>(prefix + ".out", cfg.channels_at(0), 3);
}

ad::Var CorrectionBlock::apply(const Conv& c, const ad::Var& x, bool activate) const {
  ad::Var y = ad::conv2d(x, c.weight, c.bias, {1, 1, 1});
  return activate ? ad::leaky_relu(y, cfg_.leaky_slope) : y;
}

ad::Var CorrectionBlock::operator()(const ad::Var& input) const {
  const Tensor& v = input.value();
  require_rank4(v, "correction");
  if (v.c() != 3) throw ShapeError("correction: input must have 3 channels, got " + to_string(v.shape()));
  if (v.h() < cfg_.min_extent() || v.w() < cfg_.min_extent())
    throw ShapeError("correction: input " + std::to_string(v.h()) + "x" + std::to_string(v.w()) +
                     " too small for a " + std::to_string(cfg_.levels) + "-level block");

  std::vector<ad::Var> skips;
  ad::Var x = input;
  for (int e = 0; e < cfg_.levels; ++e) {
    if (e > 0) x = ad::max_pool2(x);
    const EncoderStage& s = encoder_[static_cast<std::size_t>(e)];
    x = apply(s.conv1, apply(s.conv0, x, true), true);
    skips.push_back(x);
  }
  for (int e = cfg_.levels - 2; e >= 0; --e) {
    const DecoderStage& s = decoder_[static_cast<std::size_t>(e)];
    const Tensor& skip = skips[static_cast<std::size_t>(e)].value();
    x = apply(s.up, ad::bilinear_resize(x, skip.h(), skip.w()), true);
    x = ad::concat_channels(skips[static_cast<std::size_t>(e)], x);
    x = apply(s.conv1, apply(s.conv0, x, true), true);
  }
  x = apply(out_, x, false);
  return cfg_.global_residual ? ad::add(input, x) : x;
}

}  // namespace fcnet
