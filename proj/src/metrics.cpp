// SPDX-License-Identifier: Apache-2.0

#include "fcnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace fcnet {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double clamp01(float v) { return std::clamp(static_cast<double>(v), 0.0, 1.0); }

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable Gaussian filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto g = gaussian_window();
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "psnr");
  if (x.numel() == 0) throw ShapeError("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = clamp01(x[i]) - clamp01(y[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "ssim");
  require_rank4(x, "ssim");
  const int h = x.h(), w = x.w();
  if (h < kWindow || w < kWindow)
    throw ShapeError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the 11x11 window");
  const std::size_t plane = x.plane();
  double total = 0.0;
  int planes = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
      const float* xp = &x.at(n, c, 0, 0);
      const float* yp = &y.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        a[i] = clamp01(xp[i]);
        b[i] = clamp01(yp[i]);
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const auto mu_a = filter_valid(a, h, w), mu_b = filter_valid(b, h, w);
      const auto s_aa = filter_valid(aa, h, w), s_bb = filter_valid(bb, h, w), s_ab = filter_valid(ab, h, w);
      double acc = 0.0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = s_aa[i] - mu_a[i] * mu_a[i];
        const double vb = s_bb[i] - mu_b[i] * mu_b[i];
        const double cov = s_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2));
      }
      total += acc / static_cast<double>(mu_a.size());
      ++planes;
    }
  return total / planes;
}

}  // namespace fcnet
