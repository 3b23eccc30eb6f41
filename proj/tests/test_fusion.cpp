// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include "fcnet/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fcnet;
using fcnet::testing::grad_check;
using fcnet::testing::random_tensor;

namespace {

double max_diff(const Tensor& t, const ref::D& d) {
  double m = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) m = std::max(m, std::fabs(t[i] - d.v[i]));
  return m;
}

Tensor permute_batch(const Tensor& t, const std::vector<int>& order) {
  std::vector<Tensor> frames;
  for (int k : order) frames.push_back(t.slice_batch(k));
  return stack_batch(frames);
}

}  // namespace

TEST_CASE("guided_upsample matches per-window least squares on 8x8 grids") {
  std::mt19937_64 rng(1);
  for (double eps : {1e-4, 1e-2}) {
    for (int r : {1, 2}) {
      Tensor guide = random_tensor({2, 3, 8, 8}, rng, 0.0f, 1.0f);
      Tensor same = random_tensor({2, 3, 8, 8}, rng, -2.0f, 2.0f);
      Tensor got = guided_upsample(ad::Var::constant(same), ad::Var::constant(guide), r, static_cast<float>(eps)).value();
      CHECK(max_diff(got, ref::guided_brute_force(same, guide, r, eps)) <= 1e-5);

      Tensor small = random_tensor({2, 3, 4, 4}, rng, -2.0f, 2.0f);
      Tensor up = guided_upsample(ad::Var::constant(small), ad::Var::constant(guide), r, static_cast<float>(eps)).value();
      CHECK(up.shape() == Shape{2, 3, 8, 8});
      INFO("eps " << eps << " r " << r);
      CHECK(max_diff(up, ref::guided_brute_force(small, guide, r, eps)) <= 1e-5);
    }
  }
}

TEST_CASE("guided_upsample: constant map stays constant") {
  std::mt19937_64 rng(2);
  Tensor guide = random_tensor({1, 3, 32, 24}, rng, 0.0f, 1.0f);
  Tensor c({1, 3, 8, 6}, 0.42f);
  Tensor q = guided_upsample(ad::Var::constant(c), ad::Var::constant(guide), 2, 1e-4f).value();
  for (float v : q.values()) CHECK(v == doctest::Approx(0.42).epsilon(1e-5));
}

TEST_CASE("guided_upsample: self-guidance reproduces the guide") {
  std::mt19937_64 rng(3);
  Tensor guide = random_tensor({1, 3, 32, 32}, rng, 0.0f, 1.0f);
  Tensor gray = ad::channel_mean(ad::Var::constant(guide)).value();
  Tensor lr = ad::bilinear_resize_forward(gray, 8, 8);
  std::vector<Tensor> channels(3, lr);
  Tensor map({1, 3, 8, 8});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) map.at(0, c, y, x) = lr.at(0, 0, y, x);
  Tensor q = guided_upsample(ad::Var::constant(map), ad::Var::constant(guide), 2, 1e-8f).value();
  double err = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) err = std::max(err, static_cast<double>(std::fabs(q.at(0, c, y, x) - gray.at(0, 0, y, x))));
  CHECK(err <= 1e-3);
}

TEST_CASE("guided_upsample: large eps degenerates to the box-blurred map") {
  std::mt19937_64 rng(4);
  Tensor guide = random_tensor({1, 3, 16, 16}, rng, 0.0f, 1.0f);
  Tensor p = random_tensor({1, 3, 8, 8}, rng);
  Tensor q = guided_upsample(ad::Var::constant(p), ad::Var::constant(guide), 1, 1e8f).value();
  const ref::D want = ref::bilinear(ref::box(ref::box(ref::D(p), 1), 1), 16, 16);
  CHECK(max_diff(q, want) <= 1e-5);
}

TEST_CASE("guided_upsample: parameter validation") {
  Tensor g({1, 3, 8, 8}, 0.5f), p({1, 3, 4, 4});
  CHECK_THROWS_AS(guided_upsample(ad::Var::constant(p), ad::Var::constant(g), 0, 1e-4f), InvalidArgument);
  CHECK_THROWS_AS(guided_upsample(ad::Var::constant(p), ad::Var::constant(g), 2, 0.0f), InvalidArgument);
  CHECK_THROWS_AS(guided_upsample(ad::Var::constant(p), ad::Var::constant(g), 2, -1.0f), InvalidArgument);
}

TEST_CASE("guided_upsample: gradients match central differences") {
  std::mt19937_64 rng(5);
  ad::Var p = ad::Var::parameter(random_tensor({2, 3, 4, 5}, rng));
  ad::Var g = ad::Var::parameter(random_tensor({2, 3, 8, 10}, rng, 0.0f, 1.0f));
  const Tensor r = random_tensor({2, 3, 8, 10}, rng);
  const double eps = 1e-2;
  auto oracle = [&] {
    // The fast guided filter written out from its moment formulas.
    const ref::D P(p.value());
    const ref::D I = ref::channel_mean(ref::D(g.value()));
    const ref::D Il = ref::bilinear(I, P.h, P.w);
    const ref::D mean_i = ref::box(Il, 2), mean_p = ref::box(P, 2);
    const ref::D corr_ip = ref::box(ref::zip_channels(P, Il, std::multiplies<>()), 2);
    const ref::D corr_ii = ref::box(ref::zip(Il, Il, std::multiplies<>()), 2);
    ref::D a = P.like(), b = P.like();
    for (int n = 0; n < P.n; ++n)
      for (int c = 0; c < P.c; ++c)
        for (int y = 0; y < P.h; ++y)
          for (int x = 0; x < P.w; ++x) {
            const double mi = mean_i.at(n, 0, y, x);
            const double var = corr_ii.at(n, 0, y, x) - mi * mi;
            const double cov = corr_ip.at(n, c, y, x) - mean_p.at(n, c, y, x) * mi;
            a.at(n, c, y, x) = cov / (var + eps);
            b.at(n, c, y, x) = mean_p.at(n, c, y, x) - a.at(n, c, y, x) * mi;
          }
    const ref::D A = ref::bilinear(ref::box(a, 2), I.h, I.w), B = ref::bilinear(ref::box(b, 2), I.h, I.w);
    return ref::dot(ref::zip(ref::zip_channels(A, I, std::multiplies<>()), B, std::plus<>()), r);
  };
  auto res = grad_check(
      [&] { return ad::sum(ad::mul(guided_upsample(p, g, 2, static_cast<float>(eps)), ad::Var::constant(r))); },
      oracle, {p, g});
  INFO(res.worst);
  CHECK(res.max_rel_error <= 1e-3);
}

TEST_CASE("weight net: layer table and extents") {
  FusionBlockConfig cfg;
  cfg.m = 4;
  const auto specs = fusion_layer_specs(cfg);
  REQUIRE(specs.size() == 7);
  CHECK(specs[0].in_channels == 3);
  CHECK(specs[0].out_channels == 24);
  CHECK(specs[0].dilation == 1);
  for (int l = 1; l <= 4; ++l) {
    CHECK(specs[static_cast<std::size_t>(l)].dilation == 2 * l);
    CHECK(specs[static_cast<std::size_t>(l)].padding == 2 * l);
    CHECK(specs[static_cast<std::size_t>(l)].kernel == 3);
  }
  CHECK(specs[5].dilation == 1);
  CHECK(specs[6].kernel == 1);
  CHECK(specs[6].out_channels == 3);

  ParameterSet params;
  std::mt19937_64 rng(6);
  WeightNet net(params, "fuse.l4", cfg, rng);
  CHECK(params.scalar_count() == 672 + 4 * (24 * 24 * 9 + 24) + (24 * 24 * 9 + 24) + (24 * 3 + 3));
  CHECK(params.find("fuse.l4.conv0.weight") != nullptr);
  Tensor x = random_tensor({2, 3, 13, 11}, rng, 0.0f, 1.0f);
  Tensor y = net(ad::Var::constant(x)).value();
  CHECK(y.shape() == Shape{2, 3, 13, 11});
  CHECK_THROWS_AS(net(ad::Var::constant(Tensor({2, 4, 8, 8}))), ShapeError);
  CHECK_THROWS_AS(net(ad::Var::constant(Tensor({0, 3, 8, 8}))), InvalidArgument);
}

TEST_CASE("weight net: identical frames give identical logits") {
  ParameterSet params;
  std::mt19937_64 rng(7);
  WeightNet net(params, "w", FusionBlockConfig{}, rng);
  Tensor f = random_tensor({1, 3, 16, 16}, rng, 0.0f, 1.0f);
  std::vector<Tensor> two = {f, f};
  Tensor y = net(ad::Var::constant(stack_batch(two))).value();
  CHECK(max_abs_diff(y.slice_batch(0), y.slice_batch(1)) == 0.0f);
}

TEST_CASE("weight net: receptive field of the m=4 net spans 45 pixels") {
  ParameterSet params;
  std::mt19937_64 rng(8);
  FusionBlockConfig cfg;
  cfg.m = 4;
  WeightNet net(params, "w", cfg, rng);
  // Biases shift every pre-activation away from the leaky kink so the probe is not masked.
  for (const Parameter& p : params.items())
    if (p.name.find("bias") != std::string::npos) p.var.node()->value.fill(0.05f);
  Tensor x = random_tensor({1, 3, 61, 61}, rng, 0.0f, 1.0f);
  Tensor x2 = x;
  for (int c = 0; c < 3; ++c) x2.at(0, c, 30, 30) += 0.5f;
  Tensor y1 = net(ad::Var::constant(x)).value(), y2 = net(ad::Var::constant(x2)).value();
  int reach = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 61; ++y)
      for (int xx = 0; xx < 61; ++xx)
        if (y1.at(0, c, y, xx) != y2.at(0, c, y, xx)) reach = std::max({reach, std::abs(y - 30), std::abs(xx - 30)});
  CHECK(reach == 22);
  CHECK(1 + 2 * reach == 45);
}

TEST_CASE("fusion: low-resolution execution extents") {
  FusionBlockConfig cfg;
  CHECK(fusion_lowres_extent(512, cfg) == 128);
  CHECK(fusion_lowres_extent(64, cfg) == 16);
  CHECK(fusion_lowres_extent(33, cfg) == 9);
  CHECK(fusion_lowres_extent(20, cfg) == 8);
  CHECK(fusion_lowres_extent(8, cfg) == 8);
  CHECK(fusion_lowres_extent(5, cfg) == 5);
  cfg.min_lowres = 4;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("fuse: single frame, uniform weights and frame count checks") {
  std::mt19937_64 rng(9);
  ParameterSet params;
  FusionBlock block(params, "f", FusionBlockConfig{}, rng);
  Tensor frame = random_tensor({1, 3, 24, 20}, rng, 0.0f, 1.0f);
  FusionOutput single = block(ad::Var::constant(frame));
  CHECK(max_abs_diff(single.fused.value(), frame) == 0.0f);
  for (float w : single.weights.value().values()) CHECK(w == 1.0f);

  Tensor three = random_tensor({3, 3, 6, 6}, rng, 0.0f, 1.0f);
  ad::Var w = ad::softmax_batch(ad::Var::constant(Tensor({3, 3, 6, 6})));
  Tensor f = fuse(ad::Var::constant(three), w).value();
  Tensor mean = ad::mean_batch(ad::Var::constant(three)).value();
  CHECK(max_abs_diff(f, mean) <= 1e-6f);

  CHECK_THROWS_AS(fuse(ad::Var::constant(three), ad::Var::constant(Tensor({2, 3, 6, 6}))), ShapeError);
}

TEST_CASE("fusion block: convex hull, permutation invariance and weight normalization") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterSet params;
    FusionBlockConfig cfg;
    cfg.m = trial % 5;
    FusionBlock block(params, "f", cfg, rng);
    const int k = 2 + trial % 4;
    Tensor frames = random_tensor({k, 3, 20 + trial, 17}, rng, 0.0f, 1.0f);
    FusionOutput out = block(ad::Var::constant(frames));
    const Tensor& fused = out.fused.value();
    const Tensor& w = out.weights.value();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < frames.h(); ++y)
        for (int x = 0; x < frames.w(); ++x) {
          float lo = 2, hi = -1;
          double wsum = 0;
          for (int n = 0; n < k; ++n) {
            lo = std::min(lo, frames.at(n, c, y, x));
            hi = std::max(hi, frames.at(n, c, y, x));
            REQUIRE(w.at(n, c, y, x) >= 0.0f);
            REQUIRE(w.at(n, c, y, x) <= 1.0f);
            wsum += w.at(n, c, y, x);
          }
          REQUIRE(std::fabs(wsum - 1.0) <= 1e-5);
          REQUIRE(fused.at(0, c, y, x) >= lo - 1e-6f);
          REQUIRE(fused.at(0, c, y, x) <= hi + 1e-6f);
        }
    std::vector<int> order(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = k - 1 - i;
    std::shuffle(order.begin(), order.end(), rng);
    FusionOutput perm = block(ad::Var::constant(permute_batch(frames, order)));
    CHECK(max_abs_diff(perm.fused.value(), fused) == 0.0f);
    CHECK(max_abs_diff(perm.weights.value(), permute_batch(w, order)) == 0.0f);
  }
}
