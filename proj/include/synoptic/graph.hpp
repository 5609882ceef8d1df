#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/kernels.hpp"
#include "synoptic/network.hpp"
#include "synoptic/rng.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

enum class op_kind {
  input,
  parameter,
  conv2d,
  avgpool2d,
  linear,
  relu,
  qrelu,
  dropout,
  reshape,
  scale,
  add,
  sum,
  softmax_cross_entropy,
  synop_penalty,
};

// One vertex of the reverse-mode tape. `value` is the cached forward result,
// `grad` accumulates d(loss)/d(value) during the backward sweep.
struct node {
  op_kind kind;
  std::vector<node*> inputs;
  Tensor value;
  Tensor grad;
  std::function<void(node&)> backward_fn;

  node(op_kind k, std::vector<node*> in, Tensor v)
      : kind(k), inputs(std::move(in)), value(std::move(v)), grad(value.shape) {}
};

// Append-only tape. Nodes are created in forward order, so iterating the tape
// backwards is a valid topological order and visits each node exactly once.
class tape {
 public:
  node* make(op_kind k, std::vector<node*> inputs, Tensor value,
             std::function<void(node&)> backward_fn = nullptr) {
    nodes_.push_back(std::make_unique<node>(k, std::move(inputs), std::move(value)));
    nodes_.back()->backward_fn = std::move(backward_fn);
    return nodes_.back().get();
  }

  void backward(node* root) {
    if (root->value.numel() != 1)
      throw shape_error("backward: root must be a scalar");
    root->grad.data[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      node* n = it->get();
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<node>> nodes_;
};

// ---- elementwise helpers ---------------------------------------------------

inline float qrelu_value(float x) {
  return x <= 0.0f ? 0.0f : std::floor(x);
}

// ---- op constructors -------------------------------------------------------

inline node* make_input(tape& t, Tensor v) {
  return t.make(op_kind::input, {}, std::move(v));
}

inline node* make_parameter(tape& t, Tensor v) {
  return t.make(op_kind::parameter, {}, std::move(v));
}

inline node* op_conv2d(tape& t, node* x, node* w, pair2 stride, pair2 padding) {
  Tensor out = conv2d_forward(x->value, w->value, stride, padding);
  return t.make(op_kind::conv2d, {x, w}, std::move(out), [stride, padding](node& n) {
    node* x = n.inputs[0];
    node* w = n.inputs[1];
    conv_gradients g = conv2d_backward(n.grad, x->value, w->value, stride, padding);
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g.grad_input[i];
    for (int64_t i = 0; i < w->grad.numel(); ++i) w->grad[i] += g.grad_weight[i];
  });
}

inline node* op_avgpool2d(tape& t, node* x, pair2 kernel, pair2 stride) {
  Tensor out = avgpool2d_forward(x->value, kernel, stride);
  return t.make(op_kind::avgpool2d, {x}, std::move(out), [kernel, stride](node& n) {
    node* x = n.inputs[0];
    Tensor g = avgpool2d_backward(n.grad, x->value, kernel, stride);
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g[i];
  });
}

inline node* op_linear(tape& t, node* x, node* w) {
  Tensor out = linear_forward(x->value, w->value);
  return t.make(op_kind::linear, {x, w}, std::move(out), [](node& n) {
    node* x = n.inputs[0];
    node* w = n.inputs[1];
    linear_gradients g = linear_backward(n.grad, x->value, w->value);
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g.grad_input[i];
    for (int64_t i = 0; i < w->grad.numel(); ++i) w->grad[i] += g.grad_weight[i];
  });
}

inline node* op_reshape(tape& t, node* x, std::vector<int64_t> shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return t.make(op_kind::reshape, {x}, std::move(out), [](node& n) {
    node* x = n.inputs[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += n.grad[i];
  });
}

inline node* op_relu(tape& t, node* x) {
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = x->value[i] > 0.0f ? x->value[i] : 0.0f;
  return t.make(op_kind::relu, {x}, std::move(out), [](node& n) {
    node* x = n.inputs[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i)
      if (x->value[i] > 0.0f) x->grad[i] += n.grad[i];
  });
}

// Step-wise rectifier: 0 for x <= 0, floor(x) above. The forward is piecewise
// constant; the backward pass substitutes the plain relu derivative so
// gradients keep flowing through positive pre-activations.
inline node* op_qrelu(tape& t, node* x) {
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = qrelu_value(x->value[i]);
  return t.make(op_kind::qrelu, {x}, std::move(out), [](node& n) {
    node* x = n.inputs[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i)
      if (x->value[i] > 0.0f) x->grad[i] += n.grad[i];
  });
}

inline node* op_activation(tape& t, node* x, layer_kind k) {
  return k == layer_kind::qrelu ? op_qrelu(t, x) : op_relu(t, x);
}

// Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).
// The mask comes from a counter-based stream so a (seed, epoch, batch, layer)
// tuple always produces the same pattern.
inline node* op_dropout(tape& t, node* x, double p, rng_stream rng) {
  if (p < 0.0 || p >= 1.0) throw config_error("dropout p must be in [0,1)");
  const float keep_scale = static_cast<float>(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<float>>(x->value.data.size());
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    const float m = rng.uniform() < p ? 0.0f : keep_scale;
    (*mask)[static_cast<size_t>(i)] = m;
    out[i] = x->value[i] * m;
  }
  return t.make(op_kind::dropout, {x}, std::move(out), [mask](node& n) {
    node* x = n.inputs[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i)
      x->grad[i] += n.grad[i] * (*mask)[static_cast<size_t>(i)];
  });
}

inline node* op_scale(tape& t, node* x, double c) {
  Tensor out(x->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(c * x->value[i]);
  return t.make(op_kind::scale, {x}, std::move(out), [c](node& n) {
    node* x = n.inputs[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i)
      x->grad[i] += static_cast<float>(c * n.grad[i]);
  });
}

inline node* op_add(tape& t, node* a, node* b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out(a->value.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
  return t.make(op_kind::add, {a, b}, std::move(out), [](node& n) {
    for (node* in : n.inputs)
      for (int64_t i = 0; i < in->grad.numel(); ++i) in->grad[i] += n.grad[i];
  });
}

inline node* op_sum(tape& t, node* x) {
  Tensor out({1});
  out[0] = static_cast<float>(x->value.sum64());
  return t.make(op_kind::sum, {x}, std::move(out), [](node& n) {
    node* x = n.inputs[0];
    const float g = n.grad[0];
    for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
  });
}

// Mean-over-batch cross entropy on raw logits. Targets are class indices.
inline node* op_softmax_cross_entropy(tape& t, node* logits,
                                      const std::vector<size_t>& targets) {
  if (logits->value.rank() != 2)
    throw shape_error("softmax_cross_entropy: logits must be [N,C]");
  const int64_t n = logits->value.dim(0), c = logits->value.dim(1);
  if (static_cast<int64_t>(targets.size()) != n)
    throw shape_error("softmax_cross_entropy: " + std::to_string(targets.size()) +
                      " targets for batch of " + std::to_string(n));
  for (size_t tgt : targets)
    if (tgt >= static_cast<size_t>(c))
      throw config_error("target class " + std::to_string(tgt) + " out of range");

  auto softmax = std::make_shared<std::vector<double>>(static_cast<size_t>(n * c));
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const float* z = logits->value.data.data() + i * c;
    double m = z[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, static_cast<double>(z[j]));
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(z[j] - m);
    const double lse = m + std::log(denom);
    loss += lse - z[targets[static_cast<size_t>(i)]];
    for (int64_t j = 0; j < c; ++j)
      (*softmax)[static_cast<size_t>(i * c + j)] = std::exp(z[j] - lse);
  }
  Tensor out({1});
  out[0] = static_cast<float>(loss / n);
  auto tgt = std::make_shared<std::vector<size_t>>(targets);
  return t.make(op_kind::softmax_cross_entropy, {logits}, std::move(out),
                [softmax, tgt, n, c](node& nd) {
                  node* logits = nd.inputs[0];
                  const double g = nd.grad[0] / static_cast<double>(n);
                  for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < c; ++j) {
                      double v = (*softmax)[static_cast<size_t>(i * c + j)];
                      if (static_cast<size_t>(j) == (*tgt)[static_cast<size_t>(i)])
                        v -= 1.0;
                      logits->grad[i * c + j] += static_cast<float>(g * v);
                    }
                  }
                });
}

enum class penalty_mode { none, synop_weighted, spike_count_l1 };

inline std::string to_string(penalty_mode m) {
  switch (m) {
    case penalty_mode::none: return "none";
    case penalty_mode::synop_weighted: return "synop";
    case penalty_mode::spike_count_l1: return "spike-l1";
  }
  return "?";
}

// Activity penalty over the spiking layers. In synop-weighted mode this is
// alpha*(S0 - T)^2 where T is the fanout-weighted activation total per sample
// (batch mean); in spike-count mode it is alpha * (unweighted activation sum).
// Gradients reach the activations directly, and from there flow through the
// surrogate relu derivative of any qrelu upstream.
inline node* op_synop_penalty(tape& t, const std::vector<node*>& activations,
                              const std::vector<double>& fanouts, penalty_mode mode,
                              double s0, double alpha) {
  if (activations.size() != fanouts.size())
    throw config_error("synop_penalty: fanout count does not match activation count");
  if (activations.empty()) throw config_error("synop_penalty: no activation layers");
  const int64_t batch = activations[0]->value.dim(0);

  double total = 0.0;  // fanout-weighted or plain, per mode
  for (size_t l = 0; l < activations.size(); ++l) {
    const double w = mode == penalty_mode::spike_count_l1 ? 1.0 : fanouts[l];
    total += w * activations[l]->value.sum64();
  }
  total /= static_cast<double>(batch);

  double value = 0.0;
  if (mode == penalty_mode::synop_weighted) {
    const double gap = s0 - total;
    value = alpha * gap * gap;
  } else if (mode == penalty_mode::spike_count_l1) {
    value = alpha * total;
  }
  Tensor out({1});
  out[0] = static_cast<float>(value);
  auto fan = std::make_shared<std::vector<double>>(fanouts);
  return t.make(op_kind::synop_penalty, activations, std::move(out),
                [fan, mode, s0, alpha, total, batch](node& n) {
                  const double g = n.grad[0];
                  for (size_t l = 0; l < n.inputs.size(); ++l) {
                    double d;
                    if (mode == penalty_mode::synop_weighted) {
                      d = g * alpha * 2.0 * (total - s0) * (*fan)[l] / batch;
                    } else {
                      d = g * alpha / batch;
                    }
                    node* a = n.inputs[l];
                    for (int64_t i = 0; i < a->grad.numel(); ++i)
                      a->grad[i] += static_cast<float>(d);
                  }
                });
}

// ---- whole-network forward -------------------------------------------------

struct forward_context {
  bool train = false;
  uint64_t seed = 0;
  uint64_t epoch = 0;
  uint64_t batch = 0;
};

struct network_forward {
  node* logits = nullptr;        // raw output of the last weighted layer
  node* scored = nullptr;        // logits after the configured output activation
  std::vector<node*> activations;  // every activation layer, output one included
  std::vector<node*> params;       // parameter nodes, weighted-layer order
};

// Runs the spec over a [N,C,H,W] batch, building the tape as it goes.
inline network_forward run_network(tape& t, const network_spec& spec,
                                   const std::vector<Tensor>& weights,
                                   const Tensor& input_batch, const forward_context& ctx) {
  if (input_batch.rank() != 4)
    throw shape_error("run_network: input batch must be [N,C,H,W]");
  if (input_batch.dim(1) != spec.input_shape[0] ||
      input_batch.dim(2) != spec.input_shape[1] ||
      input_batch.dim(3) != spec.input_shape[2])
    throw shape_error("run_network: batch " + input_batch.shape_string() +
                      " does not match spec input [N," +
                      std::to_string(spec.input_shape[0]) + "," +
                      std::to_string(spec.input_shape[1]) + "," +
                      std::to_string(spec.input_shape[2]) + "]");

  network_forward out;
  node* x = make_input(t, input_batch);
  size_t weight_i = 0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const layer_spec& l = spec.layers[i];
    switch (l.kind) {
      case layer_kind::conv2d: {
        node* w = make_parameter(t, weights.at(weight_i++));
        x = op_conv2d(t, x, w, l.stride, l.padding);
        out.params.push_back(w);
        break;
      }
      case layer_kind::avgpool2d:
        x = op_avgpool2d(t, x, l.kernel, l.stride);
        break;
      case layer_kind::linear: {
        if (x->value.rank() != 2) {
          const int64_t n = x->value.dim(0);
          x = op_reshape(t, x, {n, x->value.numel() / n});
        }
        node* w = make_parameter(t, weights.at(weight_i++));
        x = op_linear(t, x, w);
        out.params.push_back(w);
        break;
      }
      case layer_kind::relu:
      case layer_kind::qrelu:
        x = op_activation(t, x, l.kind);
        out.activations.push_back(x);
        break;
      case layer_kind::dropout:
        if (ctx.train && l.dropout_p > 0.0)
          x = op_dropout(t, x, l.dropout_p,
                         rng_stream(ctx.seed, {ctx.epoch, ctx.batch, i, 0xD57ull}));
        break;
    }
  }
  out.logits = x;
  out.scored = x;
  if (spec.output_activation != output_activation_kind::none) {
    out.scored = op_activation(t, x,
                               spec.output_activation == output_activation_kind::qrelu
                                   ? layer_kind::qrelu
                                   : layer_kind::relu);
    out.activations.push_back(out.scored);
  }
  return out;
}

// He-style normal init, one deterministic stream per weighted layer.
inline std::vector<Tensor> init_weights(const network_spec& spec, uint64_t seed) {
  std::vector<Tensor> weights;
  const std::vector<size_t> wi = spec.weighted_indices();
  for (size_t i = 0; i < wi.size(); ++i) {
    std::vector<int64_t> shape = spec.weight_shape(wi[i]);
    int64_t fan_in = 1;
    for (size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor w(shape);
    rng_stream rng(seed, {0x11ull, i});
    for (int64_t k = 0; k < w.numel(); ++k)
      w[k] = static_cast<float>(stddev * rng.normal());
    weights.push_back(std::move(w));
  }
  return weights;
}

}  // namespace synoptic
