#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "oncoabs/numcore/tape.hpp"

namespace oncoabs::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // L2 coefficient added to the gradient
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamConfig cfg) : config(cfg) {
    for (const auto& p : params) {
      m.emplace_back(p.value.rows(), p.value.cols());
      v.emplace_back(p.value.rows(), p.value.cols());
    }
  }
};

/// One bias-corrected Adam update from the gradients stored in `params`.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size()) throw DimensionError("adam state does not match parameter set");
  ++state.t;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (!m.same_shape(p.value)) throw DimensionError("adam moment shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double g = static_cast<double>(p.grad[k]);
      if (c.weight_decay != 0.0) g += c.weight_decay * static_cast<double>(p.value[k]);
      const double mk = c.beta1 * static_cast<double>(m[k]) + (1.0 - c.beta1) * g;
      const double vk = c.beta2 * static_cast<double>(v[k]) + (1.0 - c.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double step = c.lr * (mk / bc1) / (std::sqrt(vk / bc2) + c.epsilon);
      p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - step);
    }
  }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterSet<T>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (T g : p.grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      for (T& g : p.grad.values()) g *= s;
  }
  return norm;
}

}  // namespace oncoabs::num
