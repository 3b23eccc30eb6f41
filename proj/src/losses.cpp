// SPDX-License-Identifier: Apache-2.0

#include "fcnet/losses.hpp"

#include <cmath>

namespace fcnet {

LossTerms LossTerms::from_name(const std::string& name) {
  if (name == "r") return {true, false, false, false};
  if (name == "r+pr") return {true, true, false, false};
  if (name == "r+pr+s") return {true, true, true, true};
  if (name == "r+pr+ps") return {true, true, true, false};
  throw InvalidArgument("unknown loss preset: " + name + " (expected r, r+pr, r+pr+s, r+pr+ps)");
}

std::string LossTerms::name() const {
  std::string s = reconstruction ? "r" : "";
  if (pyramid) s += "+pr";
  if (spatial) s += spatial_final_only ? "+s" : "+ps";
  return s;
}

double pyramid_reconstruction_weight(int level) { return std::ldexp(1.0, level - 2); }

double spatial_level_weight(int level, int depth) { return std::ldexp(1.0, 2 * (depth - level)); }

ad::Var loss_r(const ad::Var& output, const Tensor& truth) { return ad::l1_distance(output, truth); }

namespace {

void check_levels(std::span<const ad::Var> outputs, const PyramidTarget& target, const char* what) {
  if (outputs.empty()) throw InvalidArgument(std::string(what) + ": no outputs");
  if (static_cast<int>(outputs.size()) != target.depth())
    throw ShapeError(std::string(what) + ": " + std::to_string(outputs.size()) + " outputs vs " +
                     std::to_string(target.depth()) + " target levels");
}

ad::Var accumulate(ad::Var total, ad::Var term) {
  return total.defined() ? ad::add(total, term) : term;
}

}  // namespace

ad::Var loss_pr(std::span<const ad::Var> outputs, const PyramidTarget& target) {
  check_levels(outputs, target, "loss_pr");
  ad::Var total = ad::Var::constant(Tensor::scalar(0.0f));
  for (int level = 2; level <= target.depth(); ++level) {
    const auto idx = static_cast<std::size_t>(level - 1);
    ad::Var term = ad::l1_distance(outputs[idx], target.levels[idx]);
    total = ad::add(total, ad::scale(term, static_cast<float>(pyramid_reconstruction_weight(level))));
  }
  return total;
}

ad::Var region_means(const ad::Var& image, int region_size) {
  if (region_size < 1) throw InvalidArgument("region_means: region size must be >= 1");
  ad::Var gray = ad::channel_mean(image);
  const Tensor& g = gray.value();
  const int h = g.h(), w = g.w();
  if (h < 1 || w < 1) throw InvalidArgument("region_means: empty region grid");
  const int gh = (h + region_size - 1) / region_size, gw = (w + region_size - 1) / region_size;
  Tensor out({g.n(), 1, gh, gw});
  for (int n = 0; n < g.n(); ++n)
    for (int ry = 0; ry < gh; ++ry)
      for (int rx = 0; rx < gw; ++rx) {
        const int y1 = std::min(h, (ry + 1) * region_size), x1 = std::min(w, (rx + 1) * region_size);
        double s = 0.0;
        for (int y = ry * region_size; y < y1; ++y)
          for (int x = rx * region_size; x < x1; ++x) s += g.at(n, 0, y, x);
        out.at(n, 0, ry, rx) = static_cast<float>(s / ((y1 - ry * region_size) * (x1 - rx * region_size)));
      }
  return ad::record(std::move(out), {gray}, [region_size](ad::Node& self) {
    Tensor& gg = self.inputs[0]->grad_buffer();
    const int h = gg.h(), w = gg.w();
    for (int n = 0; n < gg.n(); ++n)
      for (int ry = 0; ry < self.value.h(); ++ry)
        for (int rx = 0; rx < self.value.w(); ++rx) {
          const int y1 = std::min(h, (ry + 1) * region_size), x1 = std::min(w, (rx + 1) * region_size);
          const float share = self.grad.at(n, 0, ry, rx) /
                              static_cast<float>((y1 - ry * region_size) * (x1 - rx * region_size));
          for (int y = ry * region_size; y < y1; ++y)
            for (int x = rx * region_size; x < x1; ++x) gg.at(n, 0, y, x) += share;
        }
  });
}

namespace {

constexpr int kNeighbours[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

ad::Var spatial_consistency(const ad::Var& output, const Tensor& truth, const SpatialLossConfig& cfg) {
  require_same_shape(output.value(), truth, "spatial_consistency");
  ad::Var ro = region_means(output, cfg.region_size);
  Tensor rg;
  {
    ad::NoGradGuard guard;
    rg = region_means(ad::Var::constant(truth), cfg.region_size).value();
  }
  const Tensor& r = ro.value();
  const int gh = r.h(), gw = r.w();
  const double m = static_cast<double>(gh) * gw * r.n();
  double total = 0.0;
  for (int n = 0; n < r.n(); ++n)
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x)
        for (const auto& d : kNeighbours) {
          const int ny = y + d[0], nx = x + d[1];
          if (ny < 0 || ny >= gh || nx < 0 || nx >= gw) continue;
          const double diff = std::fabs(static_cast<double>(r.at(n, 0, ny, nx)) - r.at(n, 0, y, x)) -
                              std::fabs(static_cast<double>(rg.at(n, 0, ny, nx)) - rg.at(n, 0, y, x));
          total += diff * diff;
        }
  return ad::record(Tensor::scalar(static_cast<float>(total / m)), {ro}, [rg, m](ad::Node& self) {
    const Tensor& r = self.inputs[0]->value;
    Tensor& gr = self.inputs[0]->grad_buffer();
    const double scale = 2.0 * self.grad[0] / m;
    for (int n = 0; n < r.n(); ++n)
      for (int y = 0; y < r.h(); ++y)
        for (int x = 0; x < r.w(); ++x)
          for (const auto& d : kNeighbours) {
            const int ny = y + d[0], nx = x + d[1];
            if (ny < 0 || ny >= r.h() || nx < 0 || nx >= r.w()) continue;
            const double delta = static_cast<double>(r.at(n, 0, ny, nx)) - r.at(n, 0, y, x);
            const double diff =
                std::fabs(delta) - std::fabs(static_cast<double>(rg.at(n, 0, ny, nx)) - rg.at(n, 0, y, x));
            const double sign = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
            const auto g = static_cast<float>(scale * diff * sign);
            gr.at(n, 0, ny, nx) += g;
            gr.at(n, 0, y, x) -= g;
          }
  });
}

ad::Var loss_ps(std::span<const ad::Var> outputs, const PyramidTarget& target, const SpatialLossConfig& cfg,
                int first_level, int last_level) {
  check_levels(outputs, target, "loss_ps");
  const int depth = target.depth();
  if (last_level < 0) last_level = depth;
  ad::Var total = ad::Var::constant(Tensor::scalar(0.0f));
  for (int level = first_level; level <= last_level; ++level) {
    const auto idx = static_cast<std::size_t>(level - 1);
    ad::Var term = spatial_consistency(outputs[idx], target.levels[idx], cfg);
    total = ad::add(total, ad::scale(term, static_cast<float>(spatial_level_weight(level, depth))));
  }
  return total;
}

LossBreakdown total_loss(std::span<const ad::Var> outputs, const PyramidTarget& target, const LossWeights& weights,
                         const SpatialLossConfig& spatial, const LossTerms& terms) {
  check_levels(outputs, target, "total_loss");
  LossBreakdown out;
  ad::Var total;
  if (terms.reconstruction) {
    ad::Var r = loss_r(outputs[0], target.levels[0]);
    out.reconstruction = r.value().item();
    total = accumulate(total, r);
  }
  if (terms.pyramid) {
    ad::Var pr = loss_pr(outputs, target);
    out.pyramid = pr.value().item();
    total = accumulate(total, pr);
  }
  if (terms.spatial) {
    ad::Var ps = terms.spatial_final_only ? loss_ps(outputs, target, spatial, 1, 1) : loss_ps(outputs, target, spatial);
    out.spatial = ps.value().item();
    total = accumulate(total, ad::scale(ps, weights.lambda_ps));
  }
  out.total = total.defined() ? total : ad::Var::constant(Tensor::scalar(0.0f));
  return out;
}

}  // namespace fcnet
