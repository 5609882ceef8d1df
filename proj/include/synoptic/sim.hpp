#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/events.hpp"
#include "synoptic/kernels.hpp"
#include "synoptic/model.hpp"
#include "synoptic/synop.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

struct sim_config {
  enum class input_mode { event_replay, constant_current };
  input_mode mode = input_mode::event_replay;
  int64_t dt_us = 1000;   // event-replay bin width
  int64_t n_dt = 10;      // constant-current step count
  bool reset_between_samples = true;
  bool v_floor = false;   // clamp membranes at 0 after reset (hardware variant)
  double v_th = 1.0;
};

// Exact spike/SynOp accounting for one or more simulated samples.
struct spike_ledger {
  std::vector<int64_t> layer_spikes;   // per spiking stage, cumulative
  std::vector<int64_t> layer_synops;   // spikes weighted by exact per-neuron fanout
  double input_count = 0.0;            // events delivered (or charge injected)
  double input_synops = 0.0;
  std::vector<int64_t> output_per_step;  // final-stage spikes per timestep
  size_t samples = 0;
  int64_t ties = 0;

  void merge(const spike_ledger& o) {
    if (layer_spikes.empty()) {
      layer_spikes.assign(o.layer_spikes.size(), 0);
      layer_synops.assign(o.layer_synops.size(), 0);
    }
    for (size_t i = 0; i < o.layer_spikes.size(); ++i) {
      layer_spikes[i] += o.layer_spikes[i];
      layer_synops[i] += o.layer_synops[i];
    }
    if (output_per_step.size() < o.output_per_step.size())
      output_per_step.resize(o.output_per_step.size(), 0);
    for (size_t i = 0; i < o.output_per_step.size(); ++i)
      output_per_step[i] += o.output_per_step[i];
    input_count += o.input_count;
    input_synops += o.input_synops;
    samples += o.samples;
    ties += o.ties;
  }

  int64_t total_network_synops() const {
    int64_t t = 0;
    for (int64_t s : layer_synops) t += s;
    return t;
  }
  double total_synops() const {
    return static_cast<double>(total_network_synops()) + input_synops;
  }
};

// Measured per-sample SynOps in the same shape the estimator produces, so the
// two paths can be compared directly.
inline synop_estimate measure_synops(const spike_ledger& led) {
  if (led.samples == 0) throw config_error("measure_synops: empty ledger");
  synop_estimate est;
  est.includes_input = true;
  const double n = static_cast<double>(led.samples);
  for (int64_t s : led.layer_synops)
    est.per_layer.push_back(static_cast<double>(s) / n);
  est.input_synops = led.input_synops / n;
  return est;
}

// ---- non-leaky integrate-and-fire core ---------------------------------------

// Membrane state of one neuron grid. R = 1 and I_bias = 0 throughout (biases
// are disabled in this network family).
struct iaf_state {
  std::vector<double> v;
  double v_th = 1.0;
  bool v_floor = false;

  explicit iaf_state(size_t n = 0, double threshold = 1.0, bool floor_at_zero = false)
      : v(n, 0.0), v_th(threshold), v_floor(floor_at_zero) {}

  void reset() { std::fill(v.begin(), v.end(), 0.0); }
};

// One discrete step: v += I*dt (dt folded into I), emit floor(v/v_th) spikes
// clamped at zero, subtract v_th per spike. Returns per-neuron spike counts.
inline std::vector<int64_t> iaf_step(iaf_state& state, const Tensor& input_current) {
  if (static_cast<size_t>(input_current.numel()) != state.v.size())
    throw shape_error("iaf_step: current has " + std::to_string(input_current.numel()) +
                      " elements for " + std::to_string(state.v.size()) + " neurons");
  std::vector<int64_t> spikes(state.v.size(), 0);
  for (size_t i = 0; i < state.v.size(); ++i) {
    double v = state.v[i] + input_current[static_cast<int64_t>(i)];
    int64_t n = 0;
    if (v >= state.v_th) {
      n = static_cast<int64_t>(std::floor(v / state.v_th));
      v -= static_cast<double>(n) * state.v_th;
    }
    if (state.v_floor && v < 0.0) v = 0.0;
    state.v[i] = v;
    spikes[i] = n;
  }
  return spikes;
}

// ---- whole-network simulator ---------------------------------------------------

struct sample_result {
  size_t prediction = 0;
  bool tie = false;
  std::vector<int64_t> class_spikes;
  spike_ledger ledger;  // single-sample ledger
};

struct timecourse_point {
  int64_t steps = 0;
  size_t prediction = 0;
  bool tie = false;
  double cumulative_synops = 0.0;  // network + input so far
};

// Discrete-time simulation of the converted network. Each (q)relu of the
// analog network becomes a grid of IAF neurons; the weighted and pooling ops
// between two spiking layers are folded into one synaptic transform. A final
// IAF grid always sits on the output so predictions can be read as spike
// counts.
class snn_network {
 public:
  explicit snn_network(const trained_model& model, double v_th = 1.0,
                       bool v_floor = false)
      : spec_(model.spec), v_th_(v_th), v_floor_(v_floor) {
    model.validate();
    table_ = compute_fanout(spec_);

    stage st;
    size_t weight_i = 0;
    size_t act_i = 0;
    for (const layer_spec& l : spec_.layers) {
      switch (l.kind) {
        case layer_kind::conv2d:
        case layer_kind::linear:
          st.ops.push_back({l, model.weights[weight_i++]});
          break;
        case layer_kind::avgpool2d:
          st.ops.push_back({l, Tensor{}});
          break;
        case layer_kind::dropout:
          break;  // identity at inference
        case layer_kind::relu:
        case layer_kind::qrelu: {
          close_stage(st, table_.layers[act_i++]);
          break;
        }
      }
    }
    if (!st.ops.empty()) close_stage(st, table_.output);
    if (stages_.empty()) throw config_error("snn_network: no spiking stages");

    const std::vector<int64_t>& out_shape = stages_.back().out_shape;
    num_classes_ = static_cast<size_t>(Tensor::count(out_shape));
    reset();
  }

  size_t num_stages() const { return stages_.size(); }
  size_t num_classes() const { return num_classes_; }
  const fanout_table& fanout() const { return table_; }

  void reset() {
    for (stage& s : stages_) s.state.reset();
    ledger_ = spike_ledger{};
    ledger_.layer_spikes.assign(stages_.size(), 0);
    ledger_.layer_synops.assign(stages_.size(), 0);
    class_spikes_.assign(num_classes_, 0);
    steps_run_ = 0;
  }

  // One timestep of event-replay style input: a [C,H,W] charge tensor enters
  // the first synaptic transform. Returns output-stage spikes for the step.
  int64_t step(const Tensor& input_charge) {
    Tensor x = input_charge;
    for (size_t s = 0; s < stages_.size(); ++s) x = advance_stage(s, x);
    return finish_step(x);
  }

  // Constant-current injection of `image` spread over n_dt steps. The first
  // stage tracks cumulative injected charge and emitted spikes explicitly, so
  // after the final step the total spike count per neuron is exactly
  // floor(drive/v_th) for any non-negative drive.
  void run_constant_current(const Tensor& image, int64_t n_dt,
                            const std::vector<int64_t>& checkpoints = {},
                            std::vector<timecourse_point>* trace = nullptr) {
    if (n_dt < 1) throw config_error("constant-current simulation needs n_dt >= 1");
    Tensor drive = transform(stages_[0], image);
    std::vector<int64_t> emitted(static_cast<size_t>(drive.numel()), 0);
    // charge magnitude counts as delivered input, whatever its sign
    double per_step_input = 0.0;
    double per_step_input_synops = 0.0;
    for (int64_t i = 0; i < image.numel(); ++i) {
      const double mag = std::fabs(static_cast<double>(image[i]));
      per_step_input += mag;
      per_step_input_synops += mag * table_.input.map[static_cast<size_t>(i)];
    }
    per_step_input /= static_cast<double>(n_dt);
    per_step_input_synops /= static_cast<double>(n_dt);

    size_t cp = 0;
    for (int64_t k = 1; k <= n_dt; ++k) {
      ledger_.input_count += per_step_input;
      ledger_.input_synops += per_step_input_synops;
      Tensor spikes0(stages_[0].out_shape);
      stage& s0 = stages_[0];
      if (!v_floor_) {
        for (int64_t i = 0; i < drive.numel(); ++i) {
          const double cum = static_cast<double>(drive[i]) *
                             (static_cast<double>(k) / static_cast<double>(n_dt));
          const double v = cum - static_cast<double>(emitted[static_cast<size_t>(i)]) * v_th_;
          int64_t n = 0;
          if (v >= v_th_) n = static_cast<int64_t>(std::floor(v / v_th_));
          emitted[static_cast<size_t>(i)] += n;
          s0.state.v[static_cast<size_t>(i)] =
              cum - static_cast<double>(emitted[static_cast<size_t>(i)]) * v_th_;
          spikes0[i] = static_cast<float>(n);
        }
        count_stage(0, spikes0);
      } else {
        Tensor fraction(drive.shape);
        for (int64_t i = 0; i < drive.numel(); ++i)
          fraction[i] = static_cast<float>(static_cast<double>(drive[i]) /
                                           static_cast<double>(n_dt));
        std::vector<int64_t> n = iaf_step(s0.state, fraction);
        for (int64_t i = 0; i < spikes0.numel(); ++i)
          spikes0[i] = static_cast<float>(n[static_cast<size_t>(i)]);
        count_stage(0, spikes0);
      }
      Tensor x = spikes0;
      for (size_t s = 1; s < stages_.size(); ++s) x = advance_stage(s, x);
      finish_step(x);
      if (trace && cp < checkpoints.size() && checkpoints[cp] == k) {
        trace->push_back(snapshot(k));
        ++cp;
      }
    }
  }

  // Event replay at dt-wide bins until the slice is exhausted. Multiple events
  // on one pixel in a bin become an integer charge; polarity is ignored.
  void run_event_replay(const std::vector<event>& events, int64_t dt_us,
                        const std::vector<int64_t>& checkpoints = {},
                        std::vector<timecourse_point>* trace = nullptr) {
    if (dt_us <= 0) throw config_error("event replay needs a positive bin width");
    if (spec_.input_shape[0] != 1)
      throw config_error("event replay expects a 1-channel input network");
    const int64_t h = spec_.input_shape[1], w = spec_.input_shape[2];
    const int64_t n_steps =
        events.empty() ? 0
                       : static_cast<int64_t>(events.back().t_us / static_cast<uint64_t>(dt_us)) + 1;
    size_t next_event = 0;
    size_t cp = 0;
    for (int64_t k = 0; k < n_steps; ++k) {
      Tensor frame({1, h, w});
      const uint64_t t_end = static_cast<uint64_t>(k + 1) * static_cast<uint64_t>(dt_us);
      while (next_event < events.size() && events[next_event].t_us < t_end) {
        const event& e = events[next_event];
        if (e.x >= w || e.y >= h)
          throw shape_error("event at (" + std::to_string(e.x) + "," +
                            std::to_string(e.y) + ") is outside the " +
                            std::to_string(w) + "x" + std::to_string(h) + " input");
        frame.data[static_cast<size_t>(e.y) * w + e.x] += 1.0f;
        ledger_.input_count += 1.0;
        ledger_.input_synops +=
            static_cast<double>(table_.input.map[static_cast<size_t>(e.y) * w + e.x]);
        ++next_event;
      }
      step(frame);
      if (trace && cp < checkpoints.size() && checkpoints[cp] == k + 1) {
        trace->push_back(snapshot(k + 1));
        ++cp;
      }
    }
  }

  size_t predict(bool* tie_out = nullptr) const {
    size_t best = 0;
    bool tie = false;
    for (size_t c = 1; c < class_spikes_.size(); ++c) {
      if (class_spikes_[c] > class_spikes_[best]) {
        best = c;
        tie = false;
      } else if (class_spikes_[c] == class_spikes_[best]) {
        tie = true;
      }
    }
    if (tie_out) *tie_out = tie;
    return best;
  }

  const spike_ledger& ledger() const { return ledger_; }
  const std::vector<int64_t>& class_spikes() const { return class_spikes_; }
  int64_t steps_run() const { return steps_run_; }

  // Largest membrane over all stages, for the v < v_th invariant checks.
  double max_membrane() const {
    double m = -1e300;
    for (const stage& s : stages_)
      for (double v : s.state.v) m = std::max(m, v);
    return m;
  }

  timecourse_point snapshot(int64_t steps) const {
    timecourse_point p;
    p.steps = steps;
    p.prediction = predict(&p.tie);
    p.cumulative_synops = ledger_.total_synops();
    return p;
  }

 private:
  struct transform_op {
    layer_spec layer;
    Tensor weight;
  };
  struct stage {
    std::vector<transform_op> ops;
    std::vector<int64_t> out_shape;
    iaf_state state;
    std::vector<int64_t> fanout_map;
  };

  void close_stage(stage& st, const fanout_entry& fan) {
    st.fanout_map = fan.map;
    st.out_shape = fan.grid_shape;
    st.state = iaf_state(static_cast<size_t>(Tensor::count(st.out_shape)), v_th_, v_floor_);
    stages_.push_back(std::move(st));
    st.ops.clear();
    st.out_shape.clear();
    st.fanout_map.clear();
  }

  Tensor transform(const stage& st, const Tensor& input) const {
    // batch-of-one wrapper around the shared dense kernels
    Tensor x = input;
    if (x.rank() == 3) {
      std::vector<int64_t> s = x.shape;
      x = x.reshaped({1, s[0], s[1], s[2]});
    } else if (x.rank() == 1) {
      x = x.reshaped({1, x.numel()});
    }
    for (const transform_op& op : st.ops) {
      switch (op.layer.kind) {
        case layer_kind::conv2d:
          x = conv2d_forward(x, op.weight, op.layer.stride, op.layer.padding);
          break;
        case layer_kind::avgpool2d:
          x = avgpool2d_forward(x, op.layer.kernel, op.layer.stride);
          break;
        case layer_kind::linear:
          if (x.rank() != 2) x = x.reshaped({x.dim(0), x.numel() / x.dim(0)});
          x = linear_forward(x, op.weight);
          break;
        default:
          break;
      }
    }
    std::vector<int64_t> flat(x.shape.begin() + 1, x.shape.end());
    return x.reshaped(flat);
  }

  Tensor advance_stage(size_t s, const Tensor& input) {
    stage& st = stages_[s];
    Tensor charge = transform(st, input);
    std::vector<int64_t> n = iaf_step(st.state, charge);
    Tensor spikes(st.out_shape);
    for (size_t i = 0; i < n.size(); ++i)
      spikes[static_cast<int64_t>(i)] = static_cast<float>(n[i]);
    count_stage_counts(s, n);
    return spikes;
  }

  void count_stage(size_t s, const Tensor& spikes) {
    stage& st = stages_[s];
    for (int64_t i = 0; i < spikes.numel(); ++i) {
      const int64_t n = static_cast<int64_t>(spikes[i]);
      if (n == 0) continue;
      ledger_.layer_spikes[s] += n;
      ledger_.layer_synops[s] += n * st.fanout_map[static_cast<size_t>(i)];
    }
  }

  void count_stage_counts(size_t s, const std::vector<int64_t>& n) {
    stage& st = stages_[s];
    for (size_t i = 0; i < n.size(); ++i) {
      if (n[i] == 0) continue;
      ledger_.layer_spikes[s] += n[i];
      ledger_.layer_synops[s] += n[i] * st.fanout_map[i];
    }
  }

  int64_t finish_step(const Tensor& output_spikes) {
    int64_t total = 0;
    for (int64_t i = 0; i < output_spikes.numel(); ++i) {
      const int64_t n = static_cast<int64_t>(output_spikes[i]);
      class_spikes_[static_cast<size_t>(i)] += n;
      total += n;
    }
    ledger_.output_per_step.push_back(total);
    ++steps_run_;
    return total;
  }

  network_spec spec_;
  double v_th_;
  bool v_floor_;
  fanout_table table_;
  std::vector<stage> stages_;
  std::vector<int64_t> class_spikes_;
  spike_ledger ledger_;
  size_t num_classes_ = 0;
  int64_t steps_run_ = 0;
};

// ---- sample-level drivers -------------------------------------------------------

inline sample_result run_sample(snn_network& net, const sim_config& cfg,
                                const std::vector<event>& events) {
  if (cfg.reset_between_samples) net.reset();
  net.run_event_replay(events, cfg.dt_us);
  sample_result r;
  r.prediction = net.predict(&r.tie);
  r.class_spikes = net.class_spikes();
  r.ledger = net.ledger();
  r.ledger.samples = 1;
  r.ledger.ties = r.tie ? 1 : 0;
  return r;
}

inline sample_result run_sample(snn_network& net, const sim_config& cfg,
                                const Tensor& image) {
  if (cfg.reset_between_samples) net.reset();
  net.run_constant_current(image, cfg.n_dt);
  sample_result r;
  r.prediction = net.predict(&r.tie);
  r.class_spikes = net.class_spikes();
  r.ledger = net.ledger();
  r.ledger.samples = 1;
  r.ledger.ties = r.tie ? 1 : 0;
  return r;
}

inline void validate_checkpoints(const std::vector<int64_t>& checkpoints,
                                 int64_t max_steps) {
  if (checkpoints.empty()) throw config_error("timecourse needs checkpoints");
  int64_t prev = 0;
  for (int64_t c : checkpoints) {
    if (c <= prev) throw config_error("checkpoints must be strictly ascending");
    prev = c;
  }
  if (checkpoints.back() > max_steps)
    throw config_error("checkpoint " + std::to_string(checkpoints.back()) +
                       " exceeds the " + std::to_string(max_steps) + " available steps");
}

// One pass, several read-out points; no re-simulation between checkpoints.
inline std::vector<timecourse_point> run_timecourse(snn_network& net,
                                                    const sim_config& cfg,
                                                    const std::vector<event>& events,
                                                    const std::vector<int64_t>& checkpoints) {
  const int64_t n_steps =
      events.empty()
          ? 0
          : static_cast<int64_t>(events.back().t_us / static_cast<uint64_t>(cfg.dt_us)) + 1;
  validate_checkpoints(checkpoints, n_steps);
  if (cfg.reset_between_samples) net.reset();
  std::vector<timecourse_point> trace;
  net.run_event_replay(events, cfg.dt_us, checkpoints, &trace);
  return trace;
}

inline std::vector<timecourse_point> run_timecourse(snn_network& net,
                                                    const sim_config& cfg,
                                                    const Tensor& image,
                                                    const std::vector<int64_t>& checkpoints) {
  validate_checkpoints(checkpoints, cfg.n_dt);
  if (cfg.reset_between_samples) net.reset();
  std::vector<timecourse_point> trace;
  net.run_constant_current(image, cfg.n_dt, checkpoints, &trace);
  return trace;
}

}  // namespace synoptic
