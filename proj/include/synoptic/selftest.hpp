#pragma once

// Fast invariant suite behind the `selftest` CLI command, plus the independent
// verification helpers it is built on (finite differences, brute-force fanout
// enumeration). The helpers deliberately avoid the code paths they check:
// brute_force_fanout_map counts synapses by literal enumeration instead of
// interval arithmetic, and fd oracles recompute reductions in float64.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "synoptic/graph.hpp"
#include "synoptic/kernels.hpp"
#include "synoptic/model.hpp"
#include "synoptic/network.hpp"
#include "synoptic/rng.hpp"
#include "synoptic/sim.hpp"
#include "synoptic/synop.hpp"

namespace synoptic {

// ---- finite differences -------------------------------------------------------

// Central-difference check of `analytic` against `loss` (a float64 functional
// of the leaf tensors). Returns the max semi-relative error over all elements.
inline double max_fd_error(const std::vector<Tensor*>& leaves,
                           const std::vector<Tensor>& analytic,
                           const std::function<double()>& loss, double h = 1e-3) {
  double worst = 0.0;
  for (size_t l = 0; l < leaves.size(); ++l) {
    for (int64_t i = 0; i < leaves[l]->numel(); ++i) {
      const float orig = (*leaves[l])[i];
      (*leaves[l])[i] = static_cast<float>(orig + h);
      const double up = loss();
      (*leaves[l])[i] = static_cast<float>(orig - h);
      const double down = loss();
      (*leaves[l])[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic[l][i];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      worst = std::max(worst, std::fabs(fd - an) / denom);
    }
  }
  return worst;
}

// Weighted-sum probe: turns a tensor-valued op into a scalar loss with random
// but fixed coefficients, computed in float64.
inline Tensor random_probe(const std::vector<int64_t>& shape, uint64_t seed) {
  Tensor r(shape);
  rng_stream rng(seed, {0xFDull});
  for (int64_t i = 0; i < r.numel(); ++i)
    r[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return r;
}

inline double probe_dot(const Tensor& probe, const Tensor& value) {
  double acc = 0.0;
  for (int64_t i = 0; i < probe.numel(); ++i)
    acc += static_cast<double>(probe[i]) * static_cast<double>(value[i]);
  return acc;
}

// ---- brute-force fanout ----------------------------------------------------------

// Downstream connection counts by literal synapse enumeration. Pooling stages
// must have stride == kernel here (the paper's configuration); the production
// implementation handles the general case via coverage intervals.
inline std::vector<int64_t> brute_force_fanout_map(const network_spec& spec,
                                                   int64_t start) {
  std::vector<int64_t> grid = spec.shape_after(start);
  const int64_t n_layers = static_cast<int64_t>(spec.layers.size());

  if (grid.size() == 1) {
    std::vector<int64_t> map(static_cast<size_t>(grid[0]), 0);
    for (int64_t j = start + 1; j < n_layers; ++j) {
      const layer_spec& l = spec.layers[static_cast<size_t>(j)];
      if (l.kind == layer_kind::dropout) continue;
      if (l.kind == layer_kind::linear) {
        std::fill(map.begin(), map.end(), l.out_features);
        return map;
      }
      break;
    }
    return map;
  }

  const int64_t c = grid[0];
  int64_t cur_h = grid[1], cur_w = grid[2];
  // current location of each source (y,x); dead positions fell off a pooling
  struct location {
    int64_t y, x;
    bool alive;
  };
  std::vector<location> where(static_cast<size_t>(grid[1] * grid[2]));
  for (int64_t y = 0; y < grid[1]; ++y)
    for (int64_t x = 0; x < grid[2]; ++x)
      where[static_cast<size_t>(y * grid[2] + x)] = {y, x, true};

  auto spread = [&](const std::vector<int64_t>& counts2d) {
    std::vector<int64_t> map(static_cast<size_t>(c * grid[1] * grid[2]), 0);
    for (int64_t y = 0; y < grid[1]; ++y) {
      for (int64_t x = 0; x < grid[2]; ++x) {
        const location& loc = where[static_cast<size_t>(y * grid[2] + x)];
        const int64_t v = loc.alive ? counts2d[static_cast<size_t>(loc.y * cur_w + loc.x)] : 0;
        for (int64_t ch = 0; ch < c; ++ch)
          map[static_cast<size_t>((ch * grid[1] + y) * grid[2] + x)] = v;
      }
    }
    return map;
  };

  for (int64_t j = start + 1; j < n_layers; ++j) {
    const layer_spec& l = spec.layers[static_cast<size_t>(j)];
    switch (l.kind) {
      case layer_kind::dropout:
        continue;
      case layer_kind::relu:
      case layer_kind::qrelu:
        return std::vector<int64_t>(static_cast<size_t>(c * grid[1] * grid[2]), 0);
      case layer_kind::avgpool2d: {
        if (l.stride != l.kernel)
          throw config_error("brute_force_fanout_map: pooling stride must equal kernel");
        const int64_t oh = (cur_h - l.kernel.h) / l.stride.h + 1;
        const int64_t ow = (cur_w - l.kernel.w) / l.stride.w + 1;
        for (location& loc : where) {
          if (!loc.alive) continue;
          const int64_t py = loc.y / l.kernel.h;
          const int64_t px = loc.x / l.kernel.w;
          if (py >= oh || px >= ow) {
            loc.alive = false;
          } else {
            loc.y = py;
            loc.x = px;
          }
        }
        cur_h = oh;
        cur_w = ow;
        continue;
      }
      case layer_kind::conv2d: {
        const int64_t oh = (cur_h + 2 * l.padding.h - l.kernel.h) / l.stride.h + 1;
        const int64_t ow = (cur_w + 2 * l.padding.w - l.kernel.w) / l.stride.w + 1;
        std::vector<int64_t> counts2d(static_cast<size_t>(cur_h * cur_w), 0);
        for (int64_t k = 0; k < l.out_channels; ++k) {
          for (int64_t o_y = 0; o_y < oh; ++o_y) {
            for (int64_t o_x = 0; o_x < ow; ++o_x) {
              for (int64_t ki = 0; ki < l.kernel.h; ++ki) {
                for (int64_t kj = 0; kj < l.kernel.w; ++kj) {
                  const int64_t iy = o_y * l.stride.h - l.padding.h + ki;
                  const int64_t ix = o_x * l.stride.w - l.padding.w + kj;
                  if (iy < 0 || iy >= cur_h || ix < 0 || ix >= cur_w) continue;
                  counts2d[static_cast<size_t>(iy * cur_w + ix)] += 1;
                }
              }
            }
          }
        }
        return spread(counts2d);
      }
      case layer_kind::linear: {
        std::vector<int64_t> counts2d(static_cast<size_t>(cur_h * cur_w), l.out_features);
        return spread(counts2d);
      }
    }
  }
  return std::vector<int64_t>(static_cast<size_t>(c * grid[1] * grid[2]), 0);
}

inline int64_t brute_force_fanout_scalar(const network_spec& spec, int64_t start) {
  int64_t best = 0;
  for (int64_t v : brute_force_fanout_map(spec, start)) best = std::max(best, v);
  return best;
}

// Random conv/pool/linear chain for fanout cross-checks.
inline network_spec random_chain_spec(uint64_t seed) {
  rng_stream rng(seed, {0xC4A1ull});
  network_spec spec;
  const int64_t size = 12 + static_cast<int64_t>(rng.uniform_index(10));
  spec.input_shape = {1 + static_cast<int64_t>(rng.uniform_index(3)), size, size};
  const size_t blocks = 1 + rng.uniform_index(3);
  for (size_t b = 0; b < blocks; ++b) {
    layer_spec conv;
    conv.kind = layer_kind::conv2d;
    conv.out_channels = 2 + static_cast<int64_t>(rng.uniform_index(6));
    const int64_t k = 2 + static_cast<int64_t>(rng.uniform_index(3));
    conv.kernel = {k, k};
    const int64_t s = 1 + static_cast<int64_t>(rng.uniform_index(2));
    conv.stride = {s, s};
    const int64_t p = static_cast<int64_t>(rng.uniform_index(2));
    conv.padding = {p, p};
    spec.layers.push_back(conv);
    if (rng.bernoulli(0.5)) {
      layer_spec pool;
      pool.kind = layer_kind::avgpool2d;
      pool.kernel = {2, 2};
      pool.stride = {2, 2};
      spec.layers.push_back(pool);
    }
    layer_spec act;
    act.kind = layer_kind::relu;
    spec.layers.push_back(act);
    // bail out if the spatial extent collapsed
    std::vector<int64_t> shape = spec.shape_after(static_cast<int64_t>(spec.layers.size()) - 1);
    if (shape.size() == 3 && (shape[1] < 4 || shape[2] < 4)) break;
  }
  layer_spec fc;
  fc.kind = layer_kind::linear;
  fc.out_features = 2 + static_cast<int64_t>(rng.uniform_index(9));
  spec.layers.push_back(fc);
  spec.validate();
  return spec;
}

// ---- the suite ---------------------------------------------------------------------

struct selftest_entry {
  std::string name;
  bool pass = false;
  std::string note;
};

inline std::vector<selftest_entry> run_selftest(bool inject_fault = false) {
  std::vector<selftest_entry> results;

  // 1. gradient checks on the differentiable ops
  {
    selftest_entry e{"gradient-finite-difference", true, ""};
    double worst = 0.0;
    for (uint64_t seed : {11ull, 12ull}) {
      rng_stream rng(seed);
      Tensor x({1, 2, 5, 5});
      Tensor w({3, 2, 3, 3});
      for (float& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      for (float& v : w.data) v = static_cast<float>(rng.normal() * 0.4);
      Tensor probe = random_probe({1, 3, 3, 3}, seed);

      tape t;
      node* xn = make_input(t, x);
      node* wn = make_parameter(t, w);
      node* y = op_conv2d(t, xn, wn, {1, 1}, {0, 0});
      y->grad = probe;
      y->backward_fn(*y);
      const std::vector<Tensor> analytic = {xn->grad, wn->grad};
      auto loss = [&]() {
        Tensor out = conv2d_forward(x, w, {1, 1}, {0, 0});
        return probe_dot(probe, out);
      };
      worst = std::max(worst, max_fd_error({&x, &w}, analytic, loss));
    }
    if (inject_fault) worst += 1.0;
    e.pass = worst < 1e-3;
    e.note = "max rel err " + std::to_string(worst);
    results.push_back(e);
  }

  // 2. Eq.-3 / Eq.-7 equivalence: spikes from constant current = floor(drive)
  {
    selftest_entry e{"spike-count-equals-floor", true, ""};
    network_spec spec;
    spec.input_shape = {1, 1, 1};
    layer_spec fc;
    fc.kind = layer_kind::linear;
    fc.out_features = 1;
    spec.layers.push_back(fc);
    trained_model model;
    model.spec = spec;
    model.weights.push_back(Tensor({1, 1}, {1.0f}));

    rng_stream rng(0xE370ull);
    size_t failures = 0;
    for (int trial = 0; trial < 200 && failures == 0; ++trial) {
      const float drive = static_cast<float>(rng.uniform(0.0, 40.0));
      const int64_t n_dt = 1 + static_cast<int64_t>(rng.uniform_index(10));
      snn_network net(model);
      sim_config cfg;
      cfg.mode = sim_config::input_mode::constant_current;
      cfg.n_dt = n_dt;
      Tensor image({1, 1, 1}, {drive});
      sample_result r = run_sample(net, cfg, image);
      const int64_t expected = static_cast<int64_t>(std::floor(drive));
      if (r.ledger.layer_spikes[0] != expected) ++failures;
    }
    if (inject_fault) ++failures;
    e.pass = failures == 0;
    e.note = failures ? std::to_string(failures) + " mismatches" : "200 drives exact";
    results.push_back(e);
  }

  // 3. fanout: interval arithmetic vs literal enumeration
  {
    selftest_entry e{"fanout-brute-force", true, ""};
    size_t mismatches = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      network_spec spec = random_chain_spec(seed);
      fanout_table table = compute_fanout(spec);
      if (table.input.map != brute_force_fanout_map(spec, -1)) ++mismatches;
      const std::vector<size_t> acts = spec.activation_indices();
      for (size_t a = 0; a < acts.size(); ++a)
        if (table.layers[a].map !=
            brute_force_fanout_map(spec, static_cast<int64_t>(acts[a])))
          ++mismatches;
    }
    if (inject_fault) ++mismatches;
    e.pass = mismatches == 0;
    e.note = mismatches ? std::to_string(mismatches) + " layer maps differ"
                        : "5 random chains exact";
    results.push_back(e);
  }

  // 4. surrogate: qrelu backward == relu backward on the same input
  {
    selftest_entry e{"qrelu-surrogate-matches-relu", true, ""};
    rng_stream rng(77);
    Tensor x({4, 16});
    for (float& v : x.data) v = static_cast<float>(rng.uniform(-2.0, 4.0));
    Tensor probe = random_probe({4, 16}, 7);
    tape t1, t2;
    node* a = make_input(t1, x);
    node* q = op_qrelu(t1, a);
    q->grad = probe;
    q->backward_fn(*q);
    node* b = make_input(t2, x);
    node* r = op_relu(t2, b);
    r->grad = probe;
    r->backward_fn(*r);
    bool same = a->grad.data == b->grad.data;
    if (inject_fault) same = false;
    e.pass = same;
    e.note = same ? "bitwise equal" : "gradients differ";
    results.push_back(e);
  }

  return results;
}

}  // namespace synoptic
