// SPDX-License-Identifier: Apache-2.0

#include "fcnet/pyramid.hpp"

#include <array>

namespace fcnet {

namespace {

constexpr std::array<double, 5> kBinomial = {1.0, 4.0, 6.0, 4.0, 1.0};

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Filters `in` (len entries, spaced by `step`) at the output positions
// `pos * out_stride`, writing `count` values.
template <typename Src>
void blur_line(const Src* in, int len, std::ptrdiff_t step, int count, int out_stride, double* out) {
  for (int o = 0; o < count; ++o) {
    const int center = o * out_stride;
    double s = 0.0;
    for (int k = 0; k < 5; ++k) s += kBinomial[k] * static_cast<double>(in[reflect101(center + k - 2, len) * step]);
    out[o] = s / 16.0;
  }
}

// Expansion along one axis: zero-insert onto `len` samples and blur with the
// binomial kernel scaled by 2.
template <typename Src>
void expand_line(const Src* in, int coarse_len, std::ptrdiff_t step, int len, double* out) {
  for (int x = 0; x < len; ++x) {
    double s = 0.0;
    for (int k = 0; k < 5; ++k) {
      const int j = reflect101(x + k - 2, len);
      if (j % 2 == 0 && j / 2 < coarse_len) s += kBinomial[k] * static_cast<double>(in[(j / 2) * step]);
    }
    out[x] = s / 8.0;
  }
}

}  // namespace

int level_extent(int full, int level) {
  int e = full;
  for (int i = 1; i < level; ++i) e = (e + 1) / 2;
  return e;
}

Tensor blur_downsample(const Tensor& image) {
  require_rank4(image, "blur_downsample");
  const int h = image.h(), w = image.w();
  if (h < 1 || w < 1) throw ShapeError("blur_downsample: empty image");
  const int oh = h == 1 ? 1 : (h + 1) / 2;
  const int ow = w == 1 ? 1 : (w + 1) / 2;
  Tensor out({image.n(), image.c(), oh, ow});
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  std::vector<double> col(static_cast<std::size_t>(oh));
  std::vector<double> line(static_cast<std::size_t>(h));
  const int planes = image.n() * image.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = image.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y) {
      double* dst = rows.data() + static_cast<std::size_t>(y) * ow;
      if (w == 1) {
        dst[0] = src[y];
      } else {
        blur_line(src + static_cast<std::size_t>(y) * w, w, 1, ow, 2, dst);
      }
    }
    float* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int x = 0; x < ow; ++x) {
      if (h == 1) {
        dst[x] = static_cast<float>(rows[x]);
        continue;
      }
      blur_line(rows.data() + x, h, ow, oh, 2, col.data());
      for (int y = 0; y < oh; ++y) dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(col[y]);
    }
  }
  return out;
}

Tensor pyramid_expand(const Tensor& coarse, int out_h, int out_w) {
  require_rank4(coarse, "pyramid_expand");
  const int ch = coarse.h(), cw = coarse.w();
  const int expect_h = out_h == 1 ? 1 : (out_h + 1) / 2;
  const int expect_w = out_w == 1 ? 1 : (out_w + 1) / 2;
  if (out_h < 1 || out_w < 1 || expect_h != ch || expect_w != cw)
    throw ShapeError("pyramid_expand: coarse " + to_string(coarse.shape()) + " cannot expand to " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  Tensor out({coarse.n(), coarse.c(), out_h, out_w});
  std::vector<double> rows(static_cast<std::size_t>(ch) * out_w);
  std::vector<double> col(static_cast<std::size_t>(out_h));
  const int planes = coarse.n() * coarse.c();
  for (int p = 0; p < planes; ++p) {
    const float* src = coarse.data() + static_cast<std::size_t>(p) * ch * cw;
    for (int y = 0; y < ch; ++y) {
      double* dst = rows.data() + static_cast<std::size_t>(y) * out_w;
      if (out_w == 1) {
        dst[0] = src[y];
      } else {
        expand_line(src + static_cast<std::size_t>(y) * cw, cw, 1, out_w, dst);
      }
    }
    float* dst = out.data() + static_cast<std::size_t>(p) * out_h * out_w;
    for (int x = 0; x < out_w; ++x) {
      if (out_h == 1) {
        dst[x] = static_cast<float>(rows[x]);
        continue;
      }
      expand_line(rows.data() + x, ch, out_w, out_h, col.data());
      for (int y = 0; y < out_h; ++y) dst[static_cast<std::size_t>(y) * out_w + x] = static_cast<float>(col[y]);
    }
  }
  return out;
}

namespace {

void check_depth(const Tensor& image, int depth, const char* what) {
  require_rank4(image, what);
  if (depth < 1) throw InvalidArgument(std::string(what) + ": depth must be >= 1");
  const long min_extent = 1L << (depth - 1);
  if (image.h() < min_extent || image.w() < min_extent)
    throw ShapeError(std::string(what) + ": image " + std::to_string(image.h()) + "x" +
                     std::to_string(image.w()) + " too small for depth " + std::to_string(depth));
}

}  // namespace

LaplacianStack lp_decompose(const Tensor& image, int depth) {
  check_depth(image, depth, "lp_decompose");
  LaplacianStack stack;
  Tensor current = image;
  for (int i = 1; i < depth; ++i) {
    Tensor down = blur_downsample(current);
    Tensor up = pyramid_expand(down, current.h(), current.w());
    for (std::size_t k = 0; k < current.numel(); ++k) current[k] -= up[k];
    stack.details.push_back(std::move(current));
    current = std::move(down);
  }
  stack.base = std::move(current);
  return stack;
}

Tensor lp_reconstruct(const LaplacianStack& stack) {
  Tensor current = stack.base;
  require_rank4(current, "lp_reconstruct");
  for (auto it = stack.details.rbegin(); it != stack.details.rend(); ++it) {
    const Tensor& detail = *it;
    require_rank4(detail, "lp_reconstruct");
    if (detail.n() != current.n() || detail.c() != current.c())
      throw ShapeError("lp_reconstruct: level " + to_string(detail.shape()) + " vs base " +
                       to_string(current.shape()));
    Tensor up = pyramid_expand(current, detail.h(), detail.w());
    for (std::size_t k = 0; k < up.numel(); ++k) up[k] += detail[k];
    current = std::move(up);
  }
  return current;
}

PyramidTarget gaussian_pyramid(const Tensor& image, int depth) {
  check_depth(image, depth, "gaussian_pyramid");
  PyramidTarget target;
  target.levels.push_back(image);
  for (int i = 1; i < depth; ++i) target.levels.push_back(blur_downsample(target.levels.back()));
  return target;
}

LearnedUpsampler::LearnedUpsampler(ParameterSet& params, const std::string& prefix,
                                   std::mt19937_64& rng) {
  weight_ = params.add(prefix + ".weight", kaiming_normal({3, 3, 3, 3}, 27, rng));
  bias_ = params.add(prefix + ".bias", Tensor({3}));
}

ad::Var LearnedUpsampler::apply(const ad::Var& coarse, int out_h, int out_w) const {
  return ad::conv2d(ad::bilinear_resize(coarse, out_h, out_w), weight_, bias_, {1, 1, 1});
}

void LearnedUpsampler::set_identity() {
  Tensor& w = weight_.mutable_value();
  w.fill(0.0f);
  for (int c = 0; c < 3; ++c) w.at(c, c, 1, 1) = 1.0f;
  bias_.mutable_value().fill(0.0f);
}

ad::Var compose_base(const ad::Var& output, const Tensor& details, const LearnedUpsampler& upsampler) {
  require_rank4(output.value(), "compose_base");
  require_rank4(details, "compose_base");
  if (output.value().n() != 1 || output.value().c() != details.c())
    throw ShapeError("compose_base: output " + to_string(output.shape()) + " vs details " +
                     to_string(details.shape()));
  const int expect_h = (details.h() + 1) / 2, expect_w = (details.w() + 1) / 2;
  if (output.value().h() != expect_h || output.value().w() != expect_w)
    throw ShapeError("compose_base: output " + to_string(output.shape()) +
                     " is not the coarse level of details " + to_string(details.shape()));
  ad::Var up = upsampler.apply(output, details.h(), details.w());
  return ad::add(ad::repeat_batch(up, details.n()), ad::Var::constant(details));
}

}  // namespace fcnet
