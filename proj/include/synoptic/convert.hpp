#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/graph.hpp"
#include "synoptic/model.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

// Multiplies the first weighted layer's weights by rho. Equivalent to scaling
// the input signal; for a bias-free pure-relu network this rescales every
// activation by rho and leaves argmax predictions untouched. Quantized
// networks lose that property (callers should warn, see
// scaling_changes_behavior).
inline trained_model scale_input_weights(const trained_model& model, double rho) {
  if (rho <= 0.0) throw config_error("input weight scale must be positive");
  model.validate();
  trained_model out = model;
  for (float& w : out.weights.front().data) w = static_cast<float>(w * rho);
  out.meta.rho_applied *= rho;
  return out;
}

// Same, for the last weighted layer (the paper's 1/rho logit compensation).
inline trained_model scale_output_weights(const trained_model& model, double factor) {
  if (factor <= 0.0) throw config_error("output weight scale must be positive");
  model.validate();
  trained_model out = model;
  for (float& w : out.weights.back().data) w = static_cast<float>(w * factor);
  out.meta.output_scale_applied *= factor;
  return out;
}

inline bool scaling_changes_behavior(const trained_model& model) {
  return model.is_quantized();
}

// ---- robust percentile normalization ----------------------------------------

// Linear-interpolation percentile over a pooled sample (numpy's "linear"
// estimator). `values` is consumed and sorted in place.
inline double percentile_of(std::vector<float>& values, double pct) {
  if (values.empty()) throw config_error("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double q = (pct / 100.0) * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(q);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = q - static_cast<double>(lo);
  return values[lo] + frac * (static_cast<double>(values[lo + 1]) - values[lo]);
}

struct normalize_result {
  trained_model model;
  std::vector<double> lambdas;  // measured per spiking layer, pre-scaling
};

// Per-layer weight rescaling so the `pct`-th percentile of activations is
// constant across the spiking layers: incoming weights of layer l are
// multiplied by lambda_{l-1}/lambda_l with lambda_0 = 1 for the input.
// Percentiles are measured over all activations of all calibration samples
// pooled per layer.
inline normalize_result robust_normalize(const trained_model& model,
                                         const std::vector<Tensor>& calibration_batches,
                                         double pct = 99.0) {
  model.validate();
  if (calibration_batches.empty())
    throw config_error("robust_normalize needs a non-empty calibration set");

  const std::vector<size_t> act_idx = model.spec.activation_indices();
  const bool output_spiking =
      model.spec.output_activation != output_activation_kind::none;
  const size_t n_spiking = act_idx.size() + (output_spiking ? 1 : 0);
  if (n_spiking == 0)
    throw config_error("robust_normalize: network has no activation layers");

  std::vector<std::vector<float>> pooled(n_spiking);
  for (const Tensor& batch : calibration_batches) {
    tape t;
    network_forward fwd = run_network(t, model.spec, model.weights, batch, {});
    for (size_t l = 0; l < fwd.activations.size(); ++l) {
      const Tensor& a = fwd.activations[l]->value;
      pooled[l].insert(pooled[l].end(), a.data.begin(), a.data.end());
    }
  }

  std::vector<double> lambdas(n_spiking);
  for (size_t l = 0; l < n_spiking; ++l) {
    lambdas[l] = percentile_of(pooled[l], pct);
    if (lambdas[l] == 0.0)
      throw config_error("robust_normalize: spiking layer " + std::to_string(l) +
                         " is dead (percentile 0) on the calibration data");
  }

  // map spiking layer -> index of its incoming weighted layer
  const std::vector<size_t> weighted = model.spec.weighted_indices();
  trained_model out = model;
  for (size_t l = 0; l < n_spiking; ++l) {
    size_t weight_slot = 0;
    if (output_spiking && l == n_spiking - 1) {
      weight_slot = weighted.size() - 1;
    } else {
      size_t count = 0;
      for (size_t w = 0; w < weighted.size(); ++w)
        if (weighted[w] < act_idx[l]) count = w + 1;
      weight_slot = count - 1;
    }
    const double prev = l == 0 ? 1.0 : lambdas[l - 1];
    const double scale = prev / lambdas[l];
    for (float& w : out.weights[weight_slot].data)
      w = static_cast<float>(w * scale);
  }
  out.meta.robust_normalized = true;
  return {std::move(out), std::move(lambdas)};
}

// Re-measures per-spiking-layer percentiles (used by the normalization
// post-condition check and the idempotence tests).
inline std::vector<double> measure_percentiles(const trained_model& model,
                                               const std::vector<Tensor>& batches,
                                               double pct = 99.0) {
  const bool output_spiking =
      model.spec.output_activation != output_activation_kind::none;
  const size_t n_spiking = model.spec.activation_indices().size() + (output_spiking ? 1 : 0);
  std::vector<std::vector<float>> pooled(n_spiking);
  for (const Tensor& batch : batches) {
    tape t;
    network_forward fwd = run_network(t, model.spec, model.weights, batch, {});
    for (size_t l = 0; l < fwd.activations.size(); ++l) {
      const Tensor& a = fwd.activations[l]->value;
      pooled[l].insert(pooled[l].end(), a.data.begin(), a.data.end());
    }
  }
  std::vector<double> lambdas(n_spiking);
  for (size_t l = 0; l < n_spiking; ++l) lambdas[l] = percentile_of(pooled[l], pct);
  return lambdas;
}

// ---- weight statistics -------------------------------------------------------

struct weight_stats_result {
  double null_fraction = 0.0;         // |w| < threshold
  double threshold = 1e-9;
  std::vector<double> quantiles;      // p = 0.1 .. 0.9
  double median = 0.0;
  int64_t total_weights = 0;
};

// Null-connection fraction and empirical weight quantiles, pooled over every
// weight tensor of the model.
inline weight_stats_result weight_stats(const trained_model& model,
                                        double threshold = 1e-9) {
  std::vector<float> pooled;
  for (const Tensor& w : model.weights)
    pooled.insert(pooled.end(), w.data.begin(), w.data.end());

  weight_stats_result r;
  r.threshold = threshold;
  r.total_weights = static_cast<int64_t>(pooled.size());
  int64_t nulls = 0;
  for (float w : pooled)
    if (std::fabs(w) < threshold) ++nulls;
  r.null_fraction = pooled.empty() ? 0.0
                                   : static_cast<double>(nulls) /
                                         static_cast<double>(pooled.size());
  std::sort(pooled.begin(), pooled.end());
  for (int p = 1; p <= 9; ++p) {
    const double q = (static_cast<double>(p) / 10.0) *
                     static_cast<double>(pooled.size() - 1);
    const size_t lo = static_cast<size_t>(q);
    const double frac = q - static_cast<double>(lo);
    double v = pooled[lo];
    if (lo + 1 < pooled.size())
      v += frac * (static_cast<double>(pooled[lo + 1]) - pooled[lo]);
    r.quantiles.push_back(v);
  }
  r.median = r.quantiles[4];
  return r;
}

}  // namespace synoptic
