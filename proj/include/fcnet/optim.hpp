// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fcnet/autodiff.hpp"

namespace fcnet {

/// A named learnable tensor. Names are dotted paths such as
/// "fuse.l4.conv0.weight".
struct Parameter {
  std::string name;
  ad::Var var;
};

/// Ordered collection of parameters with unique names.
class ParameterSet {
 public:
  ad::Var add(std::string name, Tensor value);

  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  const Parameter* find(const std::string& name) const;
  ad::Var get(const std::string& name) const;

  void zero_grad();
  /// Sets every parameter value to zero (used by identity-reduction checks).
  void fill_zero();

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

/// Zero-mean normal with variance 2 / fan_in.
Tensor kaiming_normal(const Shape& shape, int fan_in, std::mt19937_64& rng);
Tensor kaiming_normal(const Shape& shape, int fan_in, std::uint64_t seed);

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction. Moments are keyed by parameter position in the
/// ParameterSet they were created for.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterSet& params, AdamOptions options);

  void step(ParameterSet& params);

  AdamOptions& options() { return options_; }
  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return steps_; }
  void set_step_count(std::int64_t s) { steps_ = s; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace fcnet
