// SPDX-License-Identifier: Apache-2.0
//
// Double-precision reference implementations used as test oracles. They are
// written from the operator definitions, with no code shared with the library.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fcnet/tensor.hpp"

namespace fcnet::ref {

struct D {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  D() = default;
  D(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}
  explicit D(const Tensor& t) : n(t.n()), c(t.c()), h(t.h()), w(t.w()), v(t.values().begin(), t.values().end()) {}

  double& at(int a, int b, int y, int x) { return v[((static_cast<std::size_t>(a) * c + b) * h + y) * w + x]; }
  double at(int a, int b, int y, int x) const { return v[((static_cast<std::size_t>(a) * c + b) * h + y) * w + x]; }
  std::size_t size() const { return v.size(); }
  D like() const { return D(n, c, h, w); }
};

inline double dot(const D& a, const Tensor& r) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * r[i];
  return s;
}

inline double sum(const D& a) {
  double s = 0;
  for (double x : a.v) s += x;
  return s;
}

template <typename F>
D map(const D& a, F f) {
  D out = a.like();
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = f(a.v[i]);
  return out;
}

template <typename F>
D zip(const D& a, const D& b, F f) {
  D out = a.like();
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = f(a.v[i], b.v[i]);
  return out;
}

/// `g` is N×1×H×W and broadcasts over channels.
template <typename F>
D zip_channels(const D& a, const D& g, F f) {
  D out = a.like();
  for (int n = 0; n < a.n; ++n)
    for (int c = 0; c < a.c; ++c)
      for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) out.at(n, c, y, x) = f(a.at(n, c, y, x), g.at(n, 0, y, x));
  return out;
}

inline D conv2d(const D& x, const D& wt, const D* bias, int s, int p, int d) {
  const int o_ch = wt.n, kh = wt.h, kw = wt.w;
  const int oh = (x.h + 2 * p - d * (kh - 1) - 1) / s + 1;
  const int ow = (x.w + 2 * p - d * (kw - 1) - 1) / s + 1;
  D out(x.n, o_ch, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int o = 0; o < o_ch; ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = bias ? bias->v[static_cast<std::size_t>(o)] : 0.0;
          for (int i = 0; i < x.c; ++i)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int sy = y * s - p + ky * d, sx = xx * s - p + kx * d;
                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                acc += x.at(n, i, sy, sx) * wt.at(o, i, ky, kx);
              }
          out.at(n, o, y, xx) = acc;
        }
  return out;
}

/// Bias given as a flat vector (shape {C}).
inline D bias_vector(const Tensor& b) {
  D out(1, 1, 1, static_cast<int>(b.numel()));
  for (std::size_t i = 0; i < b.numel(); ++i) out.v[i] = b[i];
  return out;
}

inline D bilinear(const D& x, int oh, int ow) {
  auto coord = [](int dst, int in, int out) {
    const double s = (dst + 0.5) * static_cast<double>(in) / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  D out(x.n, x.c, oh, ow);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const double sy = coord(y, x.h, oh), sx = coord(xx, x.w, ow);
          const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
          const int y1 = std::min(y0 + 1, x.h - 1), x1 = std::min(x0 + 1, x.w - 1);
          const double fy = sy - y0, fx = sx - x0;
          out.at(n, c, y, xx) = (1 - fy) * ((1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1)) +
                                fy * ((1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1));
        }
  return out;
}

inline D leaky_relu(const D& x, double slope) {
  return map(x, [slope](double v) { return v >= 0 ? v : slope * v; });
}

inline D channel_mean(const D& x) {
  D out(x.n, 1, x.h, x.w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) out.at(n, 0, y, xx) += x.at(n, c, y, xx) / x.c;
  return out;
}

inline D box(const D& x, int r) {
  D out = x.like();
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
          double s = 0;
          int count = 0;
          for (int sy = std::max(0, y - r); sy <= std::min(x.h - 1, y + r); ++sy)
            for (int sx = std::max(0, xx - r); sx <= std::min(x.w - 1, xx + r); ++sx) {
              s += x.at(n, c, sy, sx);
              ++count;
            }
          out.at(n, c, y, xx) = s / count;
        }
  return out;
}

inline D softmax_batch(const D& x) {
  D out = x.like();
  for (int c = 0; c < x.c; ++c)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx) {
        double m = -1e300, z = 0;
        for (int n = 0; n < x.n; ++n) m = std::max(m, x.at(n, c, y, xx));
        for (int n = 0; n < x.n; ++n) z += std::exp(x.at(n, c, y, xx) - m);
        for (int n = 0; n < x.n; ++n) out.at(n, c, y, xx) = std::exp(x.at(n, c, y, xx) - m) / z;
      }
  return out;
}

inline D sum_batch(const D& x, bool mean = false) {
  D out(1, x.c, x.h, x.w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) out.at(0, c, y, xx) += x.at(n, c, y, xx) / (mean ? x.n : 1);
  return out;
}

inline D repeat_batch(const D& x, int count) {
  D out(count, x.c, x.h, x.w);
  const std::size_t plane = x.size();
  for (int k = 0; k < count; ++k) std::copy(x.v.begin(), x.v.end(), out.v.begin() + plane * k);
  return out;
}

inline D concat(const D& a, const D& b) {
  D out(a.n, a.c + b.c, a.h, a.w);
  for (int n = 0; n < a.n; ++n)
    for (int y = 0; y < a.h; ++y)
      for (int x = 0; x < a.w; ++x) {
        for (int c = 0; c < a.c; ++c) out.at(n, c, y, x) = a.at(n, c, y, x);
        for (int c = 0; c < b.c; ++c) out.at(n, a.c + c, y, x) = b.at(n, c, y, x);
      }
  return out;
}

inline D max_pool2(const D& x) {
  D out(x.n, x.c, (x.h + 1) / 2, (x.w + 1) / 2);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx) {
          double m = -1e300;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int sy = 2 * y + dy, sx = 2 * xx + dx;
              if (sy < x.h && sx < x.w) m = std::max(m, x.at(n, c, sy, sx));
            }
          out.at(n, c, y, xx) = m;
        }
  return out;
}

}  // namespace fcnet::ref
