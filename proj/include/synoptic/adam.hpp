#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

struct adam_config {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  // Coupled decay adds weight_decay * w to the gradient before the moment
  // update (the classic Adam + L2 form); decoupled applies the decay directly
  // to the parameter instead.
  bool decoupled_decay = false;
};

struct adam_state {
  adam_config cfg;
  std::vector<Tensor> m;  // first moments, parameter-shaped
  std::vector<Tensor> v;  // second moments, parameter-shaped
  int64_t step = 0;

  adam_state() = default;

  adam_state(adam_config c, const std::vector<Tensor>& params) : cfg(c) {
    for (const Tensor& p : params) {
      m.emplace_back(p.shape);
      v.emplace_back(p.shape);
    }
  }
};

// One bias-corrected Adam update, in place. Math in float64, storage float32.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                      adam_state& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw shape_error("adam_step: parameter/gradient/state count mismatch");
  st.step += 1;
  const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    require_same_shape(params[p], grads[p], "adam_step");
    Tensor& w = params[p];
    Tensor& m = st.m[p];
    Tensor& v = st.v[p];
    for (int64_t i = 0; i < w.numel(); ++i) {
      double g = grads[p][i];
      if (st.cfg.weight_decay != 0.0 && !st.cfg.decoupled_decay)
        g += st.cfg.weight_decay * w[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      double wi = w[i];
      if (st.cfg.weight_decay != 0.0 && st.cfg.decoupled_decay)
        wi -= st.cfg.lr * st.cfg.weight_decay * wi;
      w[i] = static_cast<float>(wi - st.cfg.lr * m_hat / (std::sqrt(v_hat) + st.cfg.epsilon));
    }
  }
}

}  // namespace synoptic
