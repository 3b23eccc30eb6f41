// SPDX-License-Identifier: Apache-2.0

#include "fcnet/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace fcnet::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool needs(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

void require_channels_operand(const Tensor& a, const Tensor& g, const char* what) {
  require_rank4(a, what);
  require_rank4(g, what);
  if (g.c() != 1 || g.n() != a.n() || g.h() != a.h() || g.w() != a.w())
    throw ShapeError(std::string(what) + ": operand " + to_string(g.shape()) +
                     " does not broadcast over " + to_string(a.shape()));
}

// Row r of the column matrix corresponds to (ci, ky, kx); column to (oy, ox).
void im2col(const float* img, int channels, int h, int w, int kh, int kw, Conv2dOptions o,
            int oh, int ow, float* cols) {
  for (int ci = 0; ci < channels; ++ci) {
    const float* src = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* dst = cols;
        cols += static_cast<std::size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * o.stride - o.padding + ky * o.dilation;
          float* row = dst + static_cast<std::size_t>(oy) * ow;
          if (y < 0 || y >= h) {
            std::fill(row, row + ow, 0.0f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(y) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * o.stride - o.padding + kx * o.dilation;
            row[ox] = (x >= 0 && x < w) ? srow[x] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* cols, int channels, int h, int w, int kh, int kw, Conv2dOptions o,
            int oh, int ow, float* img) {
  for (int ci = 0; ci < channels; ++ci) {
    float* dst = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* src = cols;
        cols += static_cast<std::size_t>(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * o.stride - o.padding + ky * o.dilation;
          if (y < 0 || y >= h) continue;
          const float* row = src + static_cast<std::size_t>(oy) * ow;
          float* drow = dst + static_cast<std::size_t>(y) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * o.stride - o.padding + kx * o.dilation;
            if (x >= 0 && x < w) drow[x] += row[ox];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  int n, ci, h, w, co, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, const Tensor* bias,
                           Conv2dOptions opt) {
  require_rank4(input, "conv2d input");
  require_rank4(weight, "conv2d weight");
  if (weight.dim(1) != input.c())
    throw ShapeError("conv2d: input has " + std::to_string(input.c()) +
                     " channels but weight expects " + std::to_string(weight.dim(1)));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0)))
    throw ShapeError("conv2d: bias shape " + to_string(bias->shape()) + " for " +
                     std::to_string(weight.dim(0)) + " output channels");
  if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0)
    throw InvalidArgument("conv2d: stride/dilation must be >= 1 and padding >= 0");
  ConvGeometry g{input.n(), input.c(), input.h(), input.w(), weight.dim(0), weight.dim(2),
                 weight.dim(3), 0, 0};
  g.oh = conv_output_extent(g.h, g.kh, opt);
  g.ow = conv_output_extent(g.w, g.kw, opt);
  if (g.oh <= 0 || g.ow <= 0)
    throw ShapeError("conv2d: non-positive output extent for input " + to_string(input.shape()));
  return g;
}

struct Taps {
  std::vector<int> lo, hi;
  std::vector<float> frac;
};

// Half-pixel centers, clamped at the borders.
Taps bilinear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    t.lo[i] = lo;
    t.hi[i] = hi;
    t.frac[i] = static_cast<float>(hi == lo ? 0.0 : src - lo);
  }
  return t;
}

template <typename F>
Var elementwise_binary(const Var& a, const Var& b, const char* what, F fwd,
                       std::function<void(Node&)> bwd) {
  require_same_shape(a.value(), b.value(), what);
  Tensor out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i], bv[i]);
  return record(std::move(out), {a, b}, std::move(bwd));
}

double sorted_sum(std::span<float> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (float v : values) s += v;
  return s;
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Tensor& Var::mutable_value() {
  if (!node_->leaf) throw InvalidArgument("mutable_value() on a non-leaf variable");
  return node_->value;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0f);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->leaf = false;
  bool any = false;
  for (const Var& v : inputs) any = any || v.requires_grad();
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const Var& v : inputs) node->inputs.push_back(v.node());
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

void backward(const Var& output) {
  if (!output.defined() || output.value().numel() != 1)
    throw ShapeError("backward: output must be a single scalar, got " +
                     (output.defined() ? to_string(output.shape()) : std::string("undefined")));
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (!n->leaf) n->grad = Tensor(n->value.shape());
  output.node()->grad_buffer()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->leaf && n->backprop) n->backprop(*n);
  }
  // Interior gradients are only needed during the pass.
  for (Node* n : order)
    if (!n->leaf) n->grad = Tensor();
}

int conv_output_extent(int in, int kernel, Conv2dOptions opt) {
  return (in + 2 * opt.padding - opt.dilation * (kernel - 1) - 1) / opt.stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      Conv2dOptions opt) {
  const ConvGeometry g = conv_geometry(input, weight, bias, opt);
  const int kdim = g.ci * g.kh * g.kw;
  const int odim = g.oh * g.ow;
  Tensor out({g.n, g.co, g.oh, g.ow});
  std::vector<float> cols(static_cast<std::size_t>(kdim) * odim);
  ConstMapMat wmat(weight.data(), g.co, kdim);
  for (int n = 0; n < g.n; ++n) {
    im2col(input.data() + static_cast<std::size_t>(n) * g.ci * g.h * g.w, g.ci, g.h, g.w, g.kh,
           g.kw, opt, g.oh, g.ow, cols.data());
    MapMat y(out.data() + static_cast<std::size_t>(n) * g.co * odim, g.co, odim);
    y.noalias() = wmat * ConstMapMat(cols.data(), kdim, odim);
    if (bias)
      for (int o = 0; o < g.co; ++o) y.row(o).array() += (*bias)[static_cast<std::size_t>(o)];
  }
  return out;
}

Var conv2d(const Var& input, const Var& weight, const Var& bias, Conv2dOptions opt) {
  const Tensor* b = bias.defined() ? &bias.value() : nullptr;
  Tensor out = conv2d_forward(input.value(), weight.value(), b, opt);
  std::vector<Var> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return record(std::move(out), std::move(inputs), [opt](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    const Tensor& wt = self.inputs[1]->value;
    const ConvGeometry g = conv_geometry(x, wt, nullptr, opt);
    const int kdim = g.ci * g.kh * g.kw;
    const int odim = g.oh * g.ow;
    const bool want_x = needs(self, 0);
    const bool want_w = needs(self, 1);
    const bool want_b = self.inputs.size() > 2 && needs(self, 2);
    std::vector<float> cols(static_cast<std::size_t>(kdim) * odim);
    ConstMapMat wmat(wt.data(), g.co, kdim);
    for (int n = 0; n < g.n; ++n) {
      ConstMapMat dy(self.grad.data() + static_cast<std::size_t>(n) * g.co * odim, g.co, odim);
      if (want_w) {
        im2col(x.data() + static_cast<std::size_t>(n) * g.ci * g.h * g.w, g.ci, g.h, g.w, g.kh,
               g.kw, opt, g.oh, g.ow, cols.data());
        MapMat dw(self.inputs[1]->grad_buffer().data(), g.co, kdim);
        dw.noalias() += dy * ConstMapMat(cols.data(), kdim, odim).transpose();
      }
      if (want_b) {
        Tensor& db = self.inputs[2]->grad_buffer();
        for (int o = 0; o < g.co; ++o)
          db[static_cast<std::size_t>(o)] += static_cast<float>(dy.row(o).cast<double>().sum());
      }
      if (want_x) {
        MapMat dcols(cols.data(), kdim, odim);
        dcols.noalias() = wmat.transpose() * dy;
        col2im(cols.data(), g.ci, g.h, g.w, g.kh, g.kw, opt, g.oh, g.ow,
               self.inputs[0]->grad_buffer().data() + static_cast<std::size_t>(n) * g.ci * g.h * g.w);
      }
    }
  });
}

Tensor bilinear_resize_forward(const Tensor& input, int out_h, int out_w) {
  require_rank4(input, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("bilinear_resize: target extents must be >= 1");
  const int h = input.h(), w = input.w();
  if (h < 1 || w < 1) throw ShapeError("bilinear_resize: empty input");
  const Taps ty = bilinear_taps(h, out_h);
  const Taps tx = bilinear_taps(w, out_w);
  Tensor out({input.n(), input.c(), out_h, out_w});
  const int planes = input.n() * input.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = input.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const float* r0 = src + static_cast<std::size_t>(ty.lo[y]) * w;
      const float* r1 = src + static_cast<std::size_t>(ty.hi[y]) * w;
      const float fy = ty.frac[y];
      for (int x = 0; x < out_w; ++x) {
        const float fx = tx.frac[x];
        const float top = r0[tx.lo[x]] + fx * (r0[tx.hi[x]] - r0[tx.lo[x]]);
        const float bot = r1[tx.lo[x]] + fx * (r1[tx.hi[x]] - r1[tx.lo[x]]);
        dst[static_cast<std::size_t>(y) * out_w + x] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

Var bilinear_resize(const Var& input, int out_h, int out_w) {
  Tensor out = bilinear_resize_forward(input.value(), out_h, out_w);
  return record(std::move(out), {input}, [out_h, out_w](Node& self) {
    Tensor& gx = self.inputs[0]->grad_buffer();
    const int h = gx.h(), w = gx.w();
    const Taps ty = bilinear_taps(h, out_h);
    const Taps tx = bilinear_taps(w, out_w);
    const int planes = gx.n() * gx.c();
    for (int p = 0; p < planes; ++p) {
      float* dst = gx.data() + static_cast<std::size_t>(p) * h * w;
      const float* g = self.grad.data() + static_cast<std::size_t>(p) * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        float* r0 = dst + static_cast<std::size_t>(ty.lo[y]) * w;
        float* r1 = dst + static_cast<std::size_t>(ty.hi[y]) * w;
        const float fy = ty.frac[y];
        for (int x = 0; x < out_w; ++x) {
          const float fx = tx.frac[x];
          const float v = g[static_cast<std::size_t>(y) * out_w + x];
          r0[tx.lo[x]] += v * (1 - fy) * (1 - fx);
          r0[tx.hi[x]] += v * (1 - fy) * fx;
          r1[tx.lo[x]] += v * fy * (1 - fx);
          r1[tx.hi[x]] += v * fy * fx;
        }
      }
    }
  });
}

Var leaky_relu(const Var& input, float slope) {
  Tensor out(input.shape());
  const Tensor& x = input.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
  return record(std::move(out), {input}, [slope](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    Tensor& gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx[i] += x[i] >= 0.0f ? self.grad[i] : slope * self.grad[i];
  });
}

Var add(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "add", [](float x, float y) { return x + y; }, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!needs(self, k)) continue;
      Tensor& g = self.inputs[k]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "sub", [](float x, float y) { return x - y; }, [](Node& self) {
    if (needs(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (needs(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  return elementwise_binary(a, b, "mul", [](float x, float y) { return x * y; }, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    if (needs(self, 0)) {
      Tensor& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (needs(self, 1)) {
      Tensor& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
  return record(std::move(out), {a}, [s](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
  });
}

Var add_scalar(const Var& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + s;
  return record(std::move(out), {a}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

Var mul_channels(const Var& a, const Var& g) {
  const Tensor& av = a.value();
  const Tensor& gv = g.value();
  require_channels_operand(av, gv, "mul_channels");
  const std::size_t plane = av.plane();
  Tensor out(av.shape());
  for (int n = 0; n < av.n(); ++n)
    for (int c = 0; c < av.c(); ++c) {
      const float* src = &av.at(n, c, 0, 0);
      const float* gs = &gv.at(n, 0, 0, 0);
      float* dst = &out.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * gs[i];
    }
  return record(std::move(out), {a, g}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    const std::size_t plane = av.plane();
    for (int n = 0; n < av.n(); ++n)
      for (int c = 0; c < av.c(); ++c) {
        const float* go = &self.grad.at(n, c, 0, 0);
        if (needs(self, 0)) {
          float* ga = &self.inputs[0]->grad_buffer().at(n, c, 0, 0);
          const float* gs = &gv.at(n, 0, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) ga[i] += go[i] * gs[i];
        }
        if (needs(self, 1)) {
          float* gg = &self.inputs[1]->grad_buffer().at(n, 0, 0, 0);
          const float* src = &av.at(n, c, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) gg[i] += go[i] * src[i];
        }
      }
  });
}

Var div_channels(const Var& a, const Var& g) {
  const Tensor& av = a.value();
  const Tensor& gv = g.value();
  require_channels_operand(av, gv, "div_channels");
  const std::size_t plane = av.plane();
  Tensor out(av.shape());
  for (int n = 0; n < av.n(); ++n)
    for (int c = 0; c < av.c(); ++c) {
      const float* src = &av.at(n, c, 0, 0);
      const float* gs = &gv.at(n, 0, 0, 0);
      float* dst = &out.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] / gs[i];
    }
  return record(std::move(out), {a, g}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& gv = self.inputs[1]->value;
    const std::size_t plane = av.plane();
    for (int n = 0; n < av.n(); ++n)
      for (int c = 0; c < av.c(); ++c) {
        const float* go = &self.grad.at(n, c, 0, 0);
        const float* gs = &gv.at(n, 0, 0, 0);
        if (needs(self, 0)) {
          float* ga = &self.inputs[0]->grad_buffer().at(n, c, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) ga[i] += go[i] / gs[i];
        }
        if (needs(self, 1)) {
          float* gg = &self.inputs[1]->grad_buffer().at(n, 0, 0, 0);
          const float* src = &av.at(n, c, 0, 0);
          for (std::size_t i = 0; i < plane; ++i) gg[i] -= go[i] * src[i] / (gs[i] * gs[i]);
        }
      }
  });
}

Var channel_mean(const Var& a) {
  const Tensor& av = a.value();
  require_rank4(av, "channel_mean");
  const std::size_t plane = av.plane();
  Tensor out({av.n(), 1, av.h(), av.w()});
  const float inv = 1.0f / static_cast<float>(av.c());
  for (int n = 0; n < av.n(); ++n) {
    float* dst = &out.at(n, 0, 0, 0);
    for (int c = 0; c < av.c(); ++c) {
      const float* src = &av.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
  }
  return record(std::move(out), {a}, [inv](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    const std::size_t plane = ga.plane();
    for (int n = 0; n < ga.n(); ++n) {
      const float* go = &self.grad.at(n, 0, 0, 0);
      for (int c = 0; c < ga.c(); ++c) {
        float* dst = &ga.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) dst[i] += go[i] * inv;
      }
    }
  });
}

namespace {

// Window sums of a single plane via a summed-area table (double precision).
void box_sum_plane(const float* src, int h, int w, int r, const float* divisor, float* dst,
                   bool accumulate) {
  std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += src[static_cast<std::size_t>(y) * w + x];
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
          sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      double s = sat[static_cast<std::size_t>(y1) * (w + 1) + x1] -
                 sat[static_cast<std::size_t>(y0) * (w + 1) + x1] -
                 sat[static_cast<std::size_t>(y1) * (w + 1) + x0] +
                 sat[static_cast<std::size_t>(y0) * (w + 1) + x0];
      if (divisor) s /= divisor[static_cast<std::size_t>(y) * w + x];
      const auto v = static_cast<float>(s);
      float& out = dst[static_cast<std::size_t>(y) * w + x];
      out = accumulate ? out + v : v;
    }
  }
}

std::vector<float> window_counts(int h, int w, int r) {
  std::vector<float> counts(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int ny = std::min(h, y + r + 1) - std::max(0, y - r);
      const int nx = std::min(w, x + r + 1) - std::max(0, x - r);
      counts[static_cast<std::size_t>(y) * w + x] = static_cast<float>(ny * nx);
    }
  return counts;
}

}  // namespace

Var box_filter(const Var& a, int radius) {
  const Tensor& av = a.value();
  require_rank4(av, "box_filter");
  if (radius < 0) throw InvalidArgument("box_filter: negative radius");
  const int h = av.h(), w = av.w();
  const std::vector<float> counts = window_counts(h, w, radius);
  Tensor out(av.shape());
  const int planes = av.n() * av.c();
  for (int p = 0; p < planes; ++p)
    box_sum_plane(av.data() + static_cast<std::size_t>(p) * h * w, h, w, radius, counts.data(),
                  out.data() + static_cast<std::size_t>(p) * h * w, false);
  return record(std::move(out), {a}, [radius](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    const int h = ga.h(), w = ga.w();
    const std::vector<float> counts = window_counts(h, w, radius);
    std::vector<float> scaled(static_cast<std::size_t>(h) * w);
    const int planes = ga.n() * ga.c();
    for (int p = 0; p < planes; ++p) {
      const float* go = self.grad.data() + static_cast<std::size_t>(p) * h * w;
      for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = go[i] / counts[i];
      // Clipped square windows are symmetric: q in win(p) iff p in win(q).
      box_sum_plane(scaled.data(), h, w, radius, nullptr,
                    ga.data() + static_cast<std::size_t>(p) * h * w, true);
    }
  });
}

Var softmax_batch(const Var& logits) {
  const Tensor& lv = logits.value();
  require_rank4(lv, "softmax_batch");
  const int k = lv.n();
  const std::size_t stride = lv.numel() / static_cast<std::size_t>(k);
  Tensor out(lv.shape());
  std::vector<float> e(static_cast<std::size_t>(k));
  std::vector<float> scratch(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < stride; ++i) {
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < k; ++j) mx = std::max(mx, lv[j * stride + i]);
    for (int j = 0; j < k; ++j) e[j] = std::exp(lv[j * stride + i] - mx);
    scratch = e;
    const auto total = static_cast<float>(sorted_sum(scratch));
    for (int j = 0; j < k; ++j) out[j * stride + i] = e[j] / total;
  }
  return record(std::move(out), {logits}, [k, stride](Node& self) {
    const Tensor& s = self.value;
    Tensor& gl = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < stride; ++i) {
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += static_cast<double>(self.grad[j * stride + i]) * s[j * stride + i];
      for (int j = 0; j < k; ++j)
        gl[j * stride + i] += s[j * stride + i] * static_cast<float>(self.grad[j * stride + i] - dot);
    }
  });
}

namespace {

Var batch_reduce(const Var& a, float factor, const char* what) {
  const Tensor& av = a.value();
  require_rank4(av, what);
  const int k = av.n();
  const std::size_t stride = av.numel() / static_cast<std::size_t>(k);
  Tensor out({1, av.c(), av.h(), av.w()});
  std::vector<float> scratch(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < stride; ++i) {
    for (int j = 0; j < k; ++j) scratch[j] = av[j * stride + i];
    out[i] = static_cast<float>(sorted_sum(scratch) * factor);
  }
  return record(std::move(out), {a}, [k, stride, factor](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    for (int j = 0; j < k; ++j)
      for (std::size_t i = 0; i < stride; ++i) ga[j * stride + i] += self.grad[i] * factor;
  });
}

}  // namespace

Var sum_batch(const Var& a) { return batch_reduce(a, 1.0f, "sum_batch"); }

Var mean_batch(const Var& a) {
  return batch_reduce(a, 1.0f / static_cast<float>(a.value().dim(0)), "mean_batch");
}

Var repeat_batch(const Var& a, int count) {
  const Tensor& av = a.value();
  require_rank4(av, "repeat_batch");
  if (av.n() != 1) throw ShapeError("repeat_batch: input batch must be 1");
  if (count < 1) throw InvalidArgument("repeat_batch: count must be >= 1");
  std::vector<float> data;
  data.reserve(av.numel() * static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) data.insert(data.end(), av.values().begin(), av.values().end());
  Tensor out({count, av.c(), av.h(), av.w()}, std::move(data));
  return record(std::move(out), {a}, [count](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    const std::size_t len = ga.numel();
    for (int j = 0; j < count; ++j)
      for (std::size_t i = 0; i < len; ++i) ga[i] += self.grad[j * len + i];
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank4(av, "concat_channels");
  require_rank4(bv, "concat_channels");
  if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w())
    throw ShapeError("concat_channels: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  Tensor out({av.n(), av.c() + bv.c(), av.h(), av.w()});
  const std::size_t la = static_cast<std::size_t>(av.c()) * av.plane();
  const std::size_t lb = static_cast<std::size_t>(bv.c()) * bv.plane();
  for (int n = 0; n < av.n(); ++n) {
    std::copy_n(av.data() + n * la, la, out.data() + n * (la + lb));
    std::copy_n(bv.data() + n * lb, lb, out.data() + n * (la + lb) + la);
  }
  return record(std::move(out), {a, b}, [la, lb](Node& self) {
    const int batches = self.value.n();
    for (int n = 0; n < batches; ++n) {
      const float* go = self.grad.data() + n * (la + lb);
      if (needs(self, 0)) {
        float* ga = self.inputs[0]->grad_buffer().data() + n * la;
        for (std::size_t i = 0; i < la; ++i) ga[i] += go[i];
      }
      if (needs(self, 1)) {
        float* gb = self.inputs[1]->grad_buffer().data() + n * lb;
        for (std::size_t i = 0; i < lb; ++i) gb[i] += go[la + i];
      }
    }
  });
}

Var max_pool2(const Var& a) {
  const Tensor& av = a.value();
  require_rank4(av, "max_pool2");
  const int h = av.h(), w = av.w();
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out({av.n(), av.c(), oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.numel());
  const int planes = av.n() * av.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = av.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * y * w + 2 * x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy >= h || xx >= w) continue;
            const auto idx = static_cast<std::uint32_t>(yy * w + xx);
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(p) * oh + y) * ow + x;
        out[o] = src[best];
        (*argmax)[o] = best;
      }
  }
  return record(std::move(out), {a}, [argmax, h, w](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    const std::size_t oplane = self.value.plane();
    const std::size_t iplane = static_cast<std::size_t>(h) * w;
    for (std::size_t o = 0; o < self.value.numel(); ++o)
      ga[(o / oplane) * iplane + (*argmax)[o]] += self.grad[o];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (float v : a.value().values()) s += v;
  return record(Tensor::scalar(static_cast<float>(s)), {a}, [](Node& self) {
    Tensor& ga = self.inputs[0]->grad_buffer();
    const float g = self.grad[0];
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Var l1_distance(const Var& a, const Tensor& target) {
  require_same_shape(a.value(), target, "l1_distance");
  double s = 0.0;
  const Tensor& av = a.value();
  for (std::size_t i = 0; i < av.numel(); ++i) s += std::fabs(static_cast<double>(av[i]) - target[i]);
  return record(Tensor::scalar(static_cast<float>(s)), {a}, [target](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    Tensor& ga = self.inputs[0]->grad_buffer();
    const float g = self.grad[0];
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      const float d = av[i] - target[i];
      ga[i] += d > 0 ? g : (d < 0 ? -g : 0.0f);
    }
  });
}

}  // namespace fcnet::ad
