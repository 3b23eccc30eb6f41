// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the test binaries: random inputs, a central-difference
// gradient checker and a synthetic multi-exposure scene generator.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fcnet/autodiff.hpp"
#include "fcnet/image_io.hpp"
#include "fcnet/tensor.hpp"

namespace fcnet::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

inline Tensor random_image(int n, int h, int w, std::mt19937_64& rng) {
  return random_tensor({n, 3, h, w}, rng, 0.0f, 1.0f);
}

/// Σ r ⊙ x in double; the oracle-side projection used to turn tensor
/// outputs into scalars.
inline double project(const Tensor& x, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x[i]) * r[i];
  return s;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int resampled = 0;   // entries skipped because the loss was not smooth around them
  std::string worst;   // description of the worst entry
};

struct GradCheckOptions {
  double h = 1e-3;
  int samples_per_tensor = -1;      // -1 checks every entry
  double kink_tolerance = -1.0;     // > 0 enables resampling of non-smooth points
  double floor_fraction = 1e-3;     // error floor relative to the tensor's largest |grad|
  bool shared_floor = false;        // take the floor from the largest |grad| over all tensors instead;
                                    // needed when a tensor's exact gradient is zero by symmetry
  std::uint64_t seed = 7;
};

/// Compares analytic gradients of `analytic` (a graph-building scalar) against
/// central differences of `oracle` (a 64-bit scalar evaluation of the same
/// function) for every tensor in `wrt`.
///
/// Relative error per entry is |a − n| / max(|a|, |n|, floor) where floor is
/// `floor_fraction` times the largest analytic magnitude of that tensor (of
/// all tensors with `shared_floor`). With
/// `kink_tolerance` set, an entry whose difference quotients at h and h/2
/// disagree by more than that tolerance is treated as kink-adjacent and
/// replaced by another entry.
inline GradCheckResult grad_check(const std::function<ad::Var()>& analytic, const std::function<double()>& oracle,
                                  std::vector<ad::Var> wrt, const GradCheckOptions& opt = {}) {
  for (ad::Var& v : wrt) v.zero_grad();
  ad::backward(analytic());
  std::vector<Tensor> grads;
  for (const ad::Var& v : wrt) grads.push_back(v.has_grad() ? v.grad() : Tensor(v.shape()));

  auto largest = [](const Tensor& g) {
    double m = 0.0;
    for (float x : g.values()) m = std::max(m, static_cast<double>(std::fabs(x)));
    return m;
  };
  double overall = 0.0;
  for (const Tensor& g : grads) overall = std::max(overall, largest(g));

  GradCheckResult res;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    Tensor& value = wrt[t].mutable_value();
    const Tensor& g = grads[t];
    const double scale = opt.shared_floor ? overall : largest(g);
    const double floor = std::max(scale * opt.floor_fraction, 1e-12);

    auto quotient = [&](std::size_t i, double h) {
      const float saved = value[i];
      value[i] = static_cast<float>(saved + h);
      const double up = oracle();
      value[i] = static_cast<float>(saved - h);
      const double down = oracle();
      const double step = static_cast<double>(static_cast<float>(saved + h)) - static_cast<float>(saved - h);
      value[i] = saved;
      return (up - down) / step;
    };

    std::vector<std::size_t> order(value.numel());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t want = opt.samples_per_tensor < 0 ? order.size()
                                                        : std::min<std::size_t>(order.size(), opt.samples_per_tensor);
    std::size_t done = 0;
    for (std::size_t k = 0; k < order.size() && done < want; ++k) {
      const std::size_t i = order[k];
      const double numeric = quotient(i, opt.h);
      if (opt.kink_tolerance > 0.0) {
        const double half = quotient(i, opt.h / 2);
        const double denom = std::max({std::fabs(numeric), std::fabs(half), floor});
        if (std::fabs(numeric - half) / denom > opt.kink_tolerance) {
          ++res.resampled;
          continue;
        }
      }
      const double a = g[i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = "tensor " + std::to_string(t) + " entry " + std::to_string(i) + ": analytic " +
                    std::to_string(a) + " numeric " + std::to_string(numeric);
      }
      ++res.checked;
      ++done;
    }
  }
  return res;
}

/// Self-deleting scratch directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("fcnet_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Smooth scene radiance in (0, 1]: low-frequency colour gradients plus a few
/// soft blobs and a sharp rectangle edge.
inline Tensor synthetic_radiance(int size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor r({1, 3, size, size});
  float base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.15f + 0.35f * u(rng);
    gx[c] = 0.5f * (u(rng) - 0.5f);
    gy[c] = 0.5f * (u(rng) - 0.5f);
  }
  struct Blob {
    float cx, cy, rad, amp[3];
  };
  std::vector<Blob> blobs(4);
  for (Blob& b : blobs) {
    b.cx = u(rng);
    b.cy = u(rng);
    b.rad = 0.08f + 0.2f * u(rng);
    for (float& a : b.amp) a = 0.6f * u(rng);
  }
  const float rx0 = 0.2f + 0.3f * u(rng), ry0 = 0.2f + 0.3f * u(rng), side = 0.25f;
  const float rect_amp = 0.3f * u(rng);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const float fx = (x + 0.5f) / size, fy = (y + 0.5f) / size;
      const bool inside = fx > rx0 && fx < rx0 + side && fy > ry0 && fy < ry0 + side;
      for (int c = 0; c < 3; ++c) {
        float v = base[c] + gx[c] * (fx - 0.5f) + gy[c] * (fy - 0.5f);
        for (const Blob& b : blobs) {
          const float d2 = (fx - b.cx) * (fx - b.cx) + (fy - b.cy) * (fy - b.cy);
          v += b.amp[c] * std::exp(-d2 / (2 * b.rad * b.rad));
        }
        if (inside) v += rect_amp;
        r.at(0, c, y, x) = std::clamp(v, 0.02f, 1.0f);
      }
    }
  return r;
}

/// Camera-style rendering: scale radiance by 2^ev, clip, apply a 1/2.2 gamma.
inline Tensor render_exposure(const Tensor& radiance, double ev, float gain = 0.45f) {
  Tensor out(radiance.shape());
  const float k = gain * static_cast<float>(std::exp2(ev));
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = std::pow(std::clamp(radiance[i] * k, 0.0f, 1.0f), 1.0f / 2.2f);
  return out;
}

/// Retouched reference: brighter than the EV 0 rendering with a mild
/// S-curve, so no single exposure matches it.
inline Tensor render_ground_truth(const Tensor& radiance) {
  Tensor out(radiance.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const float v = std::pow(std::clamp(radiance[i] * 0.75f, 0.0f, 1.0f), 1.0f / 2.2f);
    out[i] = std::clamp(v + 0.15f * std::sin(6.2831853f * v) * v * (1.0f - v), 0.0f, 1.0f);
  }
  return out;
}

struct Fixture {
  std::filesystem::path manifest;
  std::vector<std::string> scenes;
};

/// Writes `count` scenes (GT plus the five canonical EVs) as PNGs and a
/// manifest referencing them with relative paths.
inline Fixture write_fixture(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
  static const std::vector<std::pair<double, std::string>> evs = {
      {-1.5, "-1.5"}, {-1.0, "-1"}, {0.0, "0"}, {1.0, "1"}, {1.5, "1.5"}};
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  Fixture fx;
  fx.manifest = dir / "manifest.jsonl";
  std::ofstream out(fx.manifest);
  for (int s = 0; s < count; ++s) {
    const std::string id = "scene" + std::to_string(s);
    std::filesystem::create_directories(dir / id);
    const Tensor radiance = synthetic_radiance(size, rng);
    write_png(dir / id / "gt.png", render_ground_truth(radiance));
    std::string exposures;
    for (const auto& [ev, tag] : evs) {
      const std::string rel = id + "/ev" + tag + ".png";
      write_png(dir / rel, render_exposure(radiance, ev));
      if (!exposures.empty()) exposures += ",";
      exposures += "\"" + tag + "\":\"" + rel + "\"";
    }
    out << "{\"scene\":\"" << id << "\",\"exposures\":{" << exposures << "},\"gt\":\"" << id << "/gt.png\"}\n";
    fx.scenes.push_back(id);
  }
  return fx;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace fcnet::testing
