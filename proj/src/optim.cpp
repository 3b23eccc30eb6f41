// SPDX-License-Identifier: Apache-2.0

#include "fcnet/optim.hpp"

#include <cmath>

namespace fcnet {

ad::Var ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), ad::Var::parameter(std::move(value))});
  return items_.back().var;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.var.value().numel();
  return n;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

ad::Var ParameterSet::get(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw InvalidArgument("unknown parameter: " + name);
  return p->var;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.var.zero_grad();
}

void ParameterSet::fill_zero() {
  for (auto& p : items_) p.var.mutable_value().fill(0.0f);
}

Tensor kaiming_normal(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  if (fan_in < 1) throw InvalidArgument("kaiming_normal: fan_in must be >= 1");
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  Tensor t(shape);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

Tensor kaiming_normal(const Shape& shape, int fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return kaiming_normal(shape, fan_in, rng);
}

Adam::Adam(const ParameterSet& params, AdamOptions options) : options_(options) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params.items()) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void Adam::step(ParameterSet& params) {
  if (params.size() != m_.size()) throw InvalidArgument("Adam: parameter set changed size");
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ad::Var var = params.items()[k].var;
    if (!var.has_grad()) continue;
    Tensor& theta = var.mutable_value();
    const Tensor& g = var.grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      theta[i] -= static_cast<float>(options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

}  // namespace fcnet
