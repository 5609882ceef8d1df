#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/graph.hpp"
#include "synoptic/network.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

// Fanout of one spiking layer: the scalar used by the SynOp estimate (the
// interior-neuron, i.e. maximum, connection count into the next weighted
// layer) plus the exact per-neuron map the simulator uses for ground-truth
// SynOp accounting. Pooling stages between a spiking layer and the next
// weighted layer are folded into the composed counts.
struct fanout_entry {
  double scalar = 0.0;
  std::vector<int64_t> map;         // per source neuron, row-major over grid
  std::vector<int64_t> grid_shape;  // [C,H,W] or [D]
};

struct fanout_table {
  fanout_entry input;                // input pixels into the first weighted layer
  std::vector<fanout_entry> layers;  // one per activation layer, network order
  fanout_entry output;               // network output; always zero fanout

  // Entries aligned with run_network's activation list: the hidden activation
  // layers followed, when the spec has an output activation, by the output.
  std::vector<const fanout_entry*> spiking_entries(const network_spec& spec) const {
    std::vector<const fanout_entry*> out;
    for (const fanout_entry& e : layers) out.push_back(&e);
    if (spec.output_activation != output_activation_kind::none) out.push_back(&output);
    return out;
  }
};

namespace detail {

// Per-dimension coverage interval, inclusive; empty when lo > hi.
struct interval {
  int64_t lo = 0;
  int64_t hi = -1;
  bool empty() const { return lo > hi; }
  int64_t len() const { return empty() ? 0 : hi - lo + 1; }
};

// Interval of output positions whose window covers input interval [in.lo, in.hi]
// for a sliding window of `kernel`/`stride` with `padding`, output size n_out.
inline interval window_coverage(interval in, int64_t kernel, int64_t stride,
                                int64_t padding, int64_t n_out) {
  if (in.empty() || n_out <= 0) return {};
  interval out{};
  bool any = false;
  for (int64_t i = in.lo; i <= in.hi; ++i) {
    const int64_t shifted = i + padding;
    // positions o with o*stride <= shifted <= o*stride + kernel - 1
    const int64_t lo_num = shifted - kernel + 1;
    int64_t lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
    int64_t hi = shifted / stride;
    if (hi > n_out - 1) hi = n_out - 1;
    if (lo > hi) continue;
    if (!any) {
      out = {lo, hi};
      any = true;
    } else {
      out.lo = std::min(out.lo, lo);
      out.hi = std::max(out.hi, hi);
    }
  }
  return any ? out : interval{};
}

}  // namespace detail

// Exact per-neuron fanout for the grid sitting after layer `start` (-1 for the
// network input): the number of distinct units of the next weighted layer that
// receive this neuron's signal, composed through any pooling in between.
inline fanout_entry exact_fanout(const network_spec& spec, int64_t start) {
  fanout_entry entry;
  std::vector<int64_t> grid = spec.shape_after(start);
  entry.grid_shape = grid;

  const int64_t n_layers = static_cast<int64_t>(spec.layers.size());

  if (grid.size() == 1) {
    // flat grid: the only legal downstream weighted layer is linear
    entry.map.assign(static_cast<size_t>(grid[0]), 0);
    for (int64_t j = start + 1; j < n_layers; ++j) {
      const layer_spec& l = spec.layers[static_cast<size_t>(j)];
      if (l.kind == layer_kind::dropout) continue;
      if (l.kind == layer_kind::linear) {
        std::fill(entry.map.begin(), entry.map.end(), l.out_features);
        entry.scalar = static_cast<double>(l.out_features);
        return entry;
      }
      if (l.is_activation())
        throw config_error("fanout: activation before any weighted layer");
      throw config_error("fanout: unsupported layer after a flat grid");
    }
    return entry;  // no downstream weighted layer: output, fanout 0
  }

  const int64_t c = grid[0], h = grid[1], w = grid[2];
  // per-dimension coverage intervals in the current spatial grid
  std::vector<detail::interval> cov_h(static_cast<size_t>(h));
  std::vector<detail::interval> cov_w(static_cast<size_t>(w));
  for (int64_t y = 0; y < h; ++y) cov_h[static_cast<size_t>(y)] = {y, y};
  for (int64_t x = 0; x < w; ++x) cov_w[static_cast<size_t>(x)] = {x, x};
  std::vector<int64_t> cur = grid;

  auto finish_spatial = [&](const std::vector<int64_t>& per_pos_h,
                            const std::vector<int64_t>& per_pos_w, int64_t units_per_pos) {
    entry.map.assign(static_cast<size_t>(c * h * w), 0);
    int64_t best = 0;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const int64_t cnt =
            per_pos_h[static_cast<size_t>(y)] * per_pos_w[static_cast<size_t>(x)] *
            units_per_pos;
        best = std::max(best, cnt);
        for (int64_t ch = 0; ch < c; ++ch)
          entry.map[static_cast<size_t>((ch * h + y) * w + x)] = cnt;
      }
    }
    entry.scalar = static_cast<double>(best);
  };

  for (int64_t j = start + 1; j < n_layers; ++j) {
    const layer_spec& l = spec.layers[static_cast<size_t>(j)];
    switch (l.kind) {
      case layer_kind::dropout:
        continue;
      case layer_kind::relu:
      case layer_kind::qrelu:
        throw config_error("fanout: activation before any weighted layer");
      case layer_kind::avgpool2d: {
        const int64_t oh = (cur[1] - l.kernel.h) / l.stride.h + 1;
        const int64_t ow = (cur[2] - l.kernel.w) / l.stride.w + 1;
        for (auto& iv : cov_h)
          iv = detail::window_coverage(iv, l.kernel.h, l.stride.h, 0, oh);
        for (auto& iv : cov_w)
          iv = detail::window_coverage(iv, l.kernel.w, l.stride.w, 0, ow);
        cur = {cur[0], oh, ow};
        continue;
      }
      case layer_kind::conv2d: {
        const int64_t oh = (cur[1] + 2 * l.padding.h - l.kernel.h) / l.stride.h + 1;
        const int64_t ow = (cur[2] + 2 * l.padding.w - l.kernel.w) / l.stride.w + 1;
        std::vector<int64_t> n_h(static_cast<size_t>(h)), n_w(static_cast<size_t>(w));
        for (int64_t y = 0; y < h; ++y)
          n_h[static_cast<size_t>(y)] =
              detail::window_coverage(cov_h[static_cast<size_t>(y)], l.kernel.h,
                                      l.stride.h, l.padding.h, oh)
                  .len();
        for (int64_t x = 0; x < w; ++x)
          n_w[static_cast<size_t>(x)] =
              detail::window_coverage(cov_w[static_cast<size_t>(x)], l.kernel.w,
                                      l.stride.w, l.padding.w, ow)
                  .len();
        finish_spatial(n_h, n_w, l.out_channels);
        return entry;
      }
      case layer_kind::linear: {
        // every unit of the current grid feeds all outputs; neurons whose
        // coverage died in a pooling remainder feed nothing
        entry.map.assign(static_cast<size_t>(c * h * w), 0);
        int64_t best = 0;
        for (int64_t y = 0; y < h; ++y) {
          for (int64_t x = 0; x < w; ++x) {
            const bool alive = !cov_h[static_cast<size_t>(y)].empty() &&
                               !cov_w[static_cast<size_t>(x)].empty();
            const int64_t cnt = alive ? l.out_features : 0;
            best = std::max(best, cnt);
            for (int64_t ch = 0; ch < c; ++ch)
              entry.map[static_cast<size_t>((ch * h + y) * w + x)] = cnt;
          }
        }
        entry.scalar = static_cast<double>(best);
        return entry;
      }
    }
  }
  entry.map.assign(static_cast<size_t>(Tensor::count(grid)), 0);
  entry.scalar = 0.0;
  return entry;
}

// Fanout for every spiking layer plus the input stage. Depends only on the
// spec, never on data.
inline fanout_table compute_fanout(const network_spec& spec) {
  spec.validate();
  fanout_table table;
  table.input = exact_fanout(spec, -1);
  for (size_t idx : spec.activation_indices())
    table.layers.push_back(exact_fanout(spec, static_cast<int64_t>(idx)));
  std::vector<int64_t> out = spec.output_shape();
  table.output.grid_shape = out;
  table.output.map.assign(static_cast<size_t>(Tensor::count(out)), 0);
  table.output.scalar = 0.0;
  return table;
}

// ---- SynOp estimation (Eq.-1 style, from activations) ----------------------

struct synop_estimate {
  std::vector<double> per_layer;  // one per spiking layer (output one included)
  double input_synops = 0.0;
  bool includes_input = false;

  double network_total() const {
    double t = 0.0;
    for (double v : per_layer) t += v;
    return t;
  }
  double total() const { return network_total() + (includes_input ? input_synops : 0.0); }
};

// Per-layer SynOps from activation tensors taken at the (q)relu outputs,
// batch-averaged: s_l = f_l * sum_i(a_i) / N.
inline synop_estimate estimate_synops(const std::vector<Tensor>& activations,
                                      const fanout_table& table, const network_spec& spec) {
  std::vector<const fanout_entry*> entries = table.spiking_entries(spec);
  if (activations.size() != entries.size())
    throw config_error("estimate_synops: " + std::to_string(activations.size()) +
                       " activation tensors for " + std::to_string(entries.size()) +
                       " spiking layers");
  synop_estimate est;
  for (size_t l = 0; l < activations.size(); ++l) {
    const int64_t batch = activations[l].dim(0);
    est.per_layer.push_back(entries[l]->scalar * activations[l].sum64() /
                            static_cast<double>(batch));
  }
  return est;
}

// Input-stage SynOps: mean total input count times the first-layer fanout.
// Counts are magnitudes, so normalized image inputs contribute like events.
inline double estimate_input_synops(const Tensor& input_batch, const fanout_table& table) {
  const int64_t batch = input_batch.dim(0);
  double total = 0.0;
  for (float v : input_batch.data) total += std::fabs(static_cast<double>(v));
  return table.input.scalar * total / static_cast<double>(batch);
}

// ---- SynOp loss -------------------------------------------------------------

struct loss_config {
  penalty_mode mode = penalty_mode::none;
  double s0 = 0.0;
  std::optional<double> alpha;  // defaults to 1/S0^2 in synop mode

  double resolved_alpha() const {
    if (alpha) return *alpha;
    if (mode == penalty_mode::synop_weighted) {
      if (s0 <= 0.0)
        throw config_error("synop loss: S0 = 0 leaves alpha = 1/S0^2 undefined; "
                           "set alpha explicitly");
      return 1.0 / (s0 * s0);
    }
    if (mode == penalty_mode::spike_count_l1)
      throw config_error("spike-l1 loss requires an explicit alpha");
    return 0.0;
  }
};

// Scalar form of the training objective, for reporting and tests. The
// differentiable path is op_synop_penalty in the graph.
inline double synop_loss_value(double classification_loss, const synop_estimate& est,
                               const loss_config& cfg) {
  switch (cfg.mode) {
    case penalty_mode::none:
      return classification_loss;
    case penalty_mode::synop_weighted: {
      const double gap = cfg.s0 - est.network_total();
      return classification_loss + cfg.resolved_alpha() * gap * gap;
    }
    case penalty_mode::spike_count_l1: {
      // unweighted: plain activation total, which est stores fanout-weighted;
      // callers in L1 mode must build est with unit fanouts
      return classification_loss + cfg.resolved_alpha() * est.network_total();
    }
  }
  return classification_loss;
}

}  // namespace synoptic
