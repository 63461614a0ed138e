#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sei/common.hpp"
#include "sei/tensor.hpp"

namespace sei {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, one pair per parameter tensor of a collection.
struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
};

struct AdamParam {
  std::string name;
  Tensor* value;
  const Tensor* grad;  // nullptr means no gradient reached this tensor
};

inline void adam_step(std::vector<AdamParam> params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const AdamParam& p : params) {
      state.m.emplace_back(p.value->shape);
      state.v.emplace_back(p.value->shape);
    }
  }
  if (state.m.size() != params.size()) throw config_error("adam_step: state holds " + std::to_string(state.m.size()) + " moment pairs for " + std::to_string(params.size()) + " parameters");
  state.step += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    AdamParam& p = params[i];
    if (!p.grad || p.grad->data.empty()) continue;
    if (!p.grad->same_shape(*p.value))
      throw config_error("adam_step: gradient shape " + shape_str(p.grad->shape) + " does not match parameter '" + p.name + "' " + shape_str(p.value->shape));
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.value->data.size(); ++j) {
      double gj = p.grad->data[j];
      if (!std::isfinite(gj)) throw numeric_error("adam_step: non-finite gradient in parameter block '" + p.name + "' at index " + std::to_string(j));
      m.data[j] = cfg.beta1 * m.data[j] + (1 - cfg.beta1) * gj;
      v.data[j] = cfg.beta2 * v.data[j] + (1 - cfg.beta2) * gj * gj;
      double mhat = m.data[j] / bc1;
      double vhat = v.data[j] / bc2;
      p.value->data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace sei
