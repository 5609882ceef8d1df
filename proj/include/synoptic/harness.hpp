#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "synoptic/adam.hpp"
#include "synoptic/convert.hpp"
#include "synoptic/dataset.hpp"
#include "synoptic/errors.hpp"
#include "synoptic/graph.hpp"
#include "synoptic/model.hpp"
#include "synoptic/sim.hpp"
#include "synoptic/synop.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

// ---- configuration ------------------------------------------------------------

struct optimizer_settings {
  double lr = 1e-3;
  std::vector<int64_t> milestones;  // epochs where lr *= decay_factor
  double decay_factor = 0.1;
  double weight_decay = 0.0;
  bool decoupled_decay = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double lr_at(int64_t epoch) const {
    double v = lr;
    for (int64_t m : milestones)
      if (epoch >= m) v *= decay_factor;
    return v;
  }

  adam_config to_adam() const {
    adam_config c;
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.epsilon = epsilon;
    c.weight_decay = weight_decay;
    c.decoupled_decay = decoupled_decay;
    return c;
  }
};

struct training_settings {
  int64_t epochs = 30;
  int64_t batch_size = 32;
  augment_config augment;   // image datasets only
  bool use_augment = false;
};

struct conversion_settings {
  std::vector<double> rho_list{1.0};
  bool robust = false;
  double percentile = 99.0;
  std::vector<double> compensation_factors{1.0, 1.5, 2.0};
};

struct sweep_settings {
  int64_t halvings = 5;
  std::vector<double> targets;  // explicit S0 list; overrides halving when set
  double accuracy_floor_factor = 1.5;  // times chance level
  bool quantize = true;
  // scale the warm start so its estimated network SynOps sit just above the
  // analog network's MAC count before the first target is set
  bool start_at_mac = true;
  int64_t stage_epochs = 220;
  optimizer_settings stage_optimizer;

  sweep_settings() {
    // Fine-tuning schedule for sweep stages: long bulk phase, then a deep lr
    // ladder. Coupled weight decay with beta2 = 0.99 lets weights that lost
    // their gradient signal decay through Adam's epsilon regime to zero
    // instead of parking at the last oscillation amplitude.
    stage_optimizer.lr = 1e-3;
    stage_optimizer.milestones = {120, 140, 160, 180};
    stage_optimizer.weight_decay = 1e-3;
    stage_optimizer.decoupled_decay = false;
    stage_optimizer.beta2 = 0.99;
    stage_optimizer.decay_factor = 0.1;
  }
};

struct experiment_config {
  network_spec network;
  std::string dataset_root;
  loss_config loss;
  optimizer_settings optimizer;
  training_settings training;
  uint64_t seed = 1;
  conversion_settings conversion;
  sim_config simulation;
  std::vector<int64_t> checkpoints;  // latency-curve read-out steps
  sweep_settings sweep;
  double joules_per_synop = 1e-11;
  bool report_joules = false;
};

// Per-sample multiply-accumulate count of the analog network, the comparison
// anchor for SynOp budgets.
inline double mac_count(const network_spec& spec) {
  double macs = 0.0;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const layer_spec& l = spec.layers[i];
    if (l.kind == layer_kind::conv2d) {
      const std::vector<int64_t> in = spec.shape_after(static_cast<int64_t>(i) - 1);
      const std::vector<int64_t> out = spec.shape_after(static_cast<int64_t>(i));
      macs += static_cast<double>(l.out_channels * in[0] * l.kernel.h * l.kernel.w) *
              static_cast<double>(out[1] * out[2]);
    } else if (l.kind == layer_kind::linear) {
      const std::vector<int64_t> in = spec.shape_after(static_cast<int64_t>(i) - 1);
      int64_t d = 1;
      for (int64_t e : in) d *= e;
      macs += static_cast<double>(l.out_features) * static_cast<double>(d);
    }
  }
  return macs;
}

// ---- batching helpers -----------------------------------------------------------

inline Tensor make_batch(const dataset& ds, const std::vector<data_sample>& samples,
                         const std::vector<size_t>& idx, size_t lo, size_t hi,
                         bool clamp_training_range) {
  const int64_t b = static_cast<int64_t>(hi - lo);
  const Tensor& probe = samples[idx[lo]].frame.frame;
  Tensor batch({b, probe.dim(0), probe.dim(1), probe.dim(2)});
  const int64_t stride = probe.numel();
  for (int64_t i = 0; i < b; ++i) {
    const frame_pair& fp = samples[idx[lo + static_cast<size_t>(i)]].frame;
    Tensor img = clamp_training_range ? fp.training_image() : fp.frame;
    std::copy(img.data.begin(), img.data.end(),
              batch.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  (void)ds;
  return batch;
}

inline std::vector<size_t> batch_labels(const std::vector<data_sample>& samples,
                                        const std::vector<size_t>& idx, size_t lo,
                                        size_t hi) {
  std::vector<size_t> out;
  for (size_t i = lo; i < hi; ++i) out.push_back(samples[idx[i]].label);
  return out;
}

// ---- training --------------------------------------------------------------------

struct epoch_log {
  int64_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double penalty = 0.0;
  double est_synops = 0.0;  // network total, input excluded
  double train_accuracy = 0.0;
};

struct train_result {
  trained_model model;
  std::vector<epoch_log> log;
  bool diverged = false;
};

// Minimizes cross entropy (+ the configured activity penalty) with Adam over
// the training split. Deterministic for a given (config, seed): shuffling,
// dropout and init all come from counter-based streams.
inline train_result train_network(const network_spec& spec, const dataset& ds,
                                  const loss_config& loss, const optimizer_settings& opt,
                                  const training_settings& tr, uint64_t seed,
                                  const std::vector<Tensor>* warm_start = nullptr) {
  spec.validate();
  if (ds.train.empty()) throw config_error("training split is empty");
  if (loss.mode != penalty_mode::none) loss.resolved_alpha();  // validate early

  const fanout_table table = compute_fanout(spec);
  std::vector<double> fanouts;
  for (const fanout_entry* e : table.spiking_entries(spec))
    fanouts.push_back(e->scalar);

  std::vector<Tensor> weights = warm_start ? *warm_start : init_weights(spec, seed);
  adam_state adam(opt.to_adam(), weights);
  std::vector<Tensor> last_good = weights;

  train_result result;
  const size_t n = ds.train.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int64_t epoch = 0; epoch < tr.epochs; ++epoch) {
    adam.cfg.lr = opt.lr_at(epoch);
    rng_stream shuffle_rng(seed, {0x50FFull, static_cast<uint64_t>(epoch)});
    shuffle_rng.shuffle(order);

    double ce_sum = 0.0, pen_sum = 0.0, est_sum = 0.0;
    size_t correct = 0;
    size_t batch_index = 0;
    for (size_t lo = 0; lo < n; lo += static_cast<size_t>(tr.batch_size), ++batch_index) {
      const size_t hi = std::min(n, lo + static_cast<size_t>(tr.batch_size));
      Tensor batch = make_batch(ds, ds.train, order, lo, hi, true);
      if (tr.use_augment && ds.kind == "images")
        batch = augment_images(batch, tr.augment,
                               rng_stream(seed, {0xA26ull, static_cast<uint64_t>(epoch),
                                                 batch_index}));
      const std::vector<size_t> labels = batch_labels(ds.train, order, lo, hi);

      tape t;
      forward_context ctx;
      ctx.train = true;
      ctx.seed = seed;
      ctx.epoch = static_cast<uint64_t>(epoch);
      ctx.batch = batch_index;
      network_forward fwd = run_network(t, spec, weights, batch, ctx);

      node* ce = op_softmax_cross_entropy(t, fwd.scored, labels);
      node* objective = ce;
      double penalty_value = 0.0;
      if (loss.mode != penalty_mode::none) {
        node* pen = op_synop_penalty(t, fwd.activations, fanouts, loss.mode, loss.s0,
                                     loss.resolved_alpha());
        penalty_value = pen->value[0];
        objective = op_add(t, ce, pen);
      }

      const double loss_value = objective->value[0];
      if (!std::isfinite(loss_value)) {
        result.model = trained_model{spec, last_good, {}};
        result.model.meta.loss_mode = to_string(loss.mode);
        result.model.meta.s0 = loss.s0;
        result.model.meta.seed = seed;
        result.diverged = true;
        return result;
      }

      t.backward(objective);
      std::vector<Tensor> grads;
      for (node* p : fwd.params) grads.push_back(p->grad);
      adam_step(weights, grads, adam);

      const size_t bsz = hi - lo;
      ce_sum += ce->value[0] * static_cast<double>(bsz);
      pen_sum += penalty_value * static_cast<double>(bsz);
      std::vector<Tensor> acts;
      for (node* a : fwd.activations) acts.push_back(a->value);
      est_sum +=
          estimate_synops(acts, table, spec).network_total() * static_cast<double>(bsz);
      const Tensor& scored = fwd.scored->value;
      const int64_t classes = scored.dim(1);
      for (size_t i = 0; i < bsz; ++i) {
        int64_t best = 0;
        for (int64_t c = 1; c < classes; ++c)
          if (scored[static_cast<int64_t>(i) * classes + c] >
              scored[static_cast<int64_t>(i) * classes + best])
            best = c;
        if (static_cast<size_t>(best) == labels[i]) ++correct;
      }
    }

    epoch_log log;
    log.epoch = epoch;
    log.lr = adam.cfg.lr;
    log.ce = ce_sum / static_cast<double>(n);
    log.penalty = pen_sum / static_cast<double>(n);
    log.est_synops = est_sum / static_cast<double>(n);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    result.log.push_back(log);
    last_good = weights;
  }

  result.model = trained_model{spec, weights, {}};
  result.model.meta.loss_mode = to_string(loss.mode);
  result.model.meta.s0 = loss.s0;
  result.model.meta.seed = seed;
  result.model.validate();
  return result;
}

// ---- evaluation -------------------------------------------------------------------

struct snn_eval {
  double factor = 1.0;
  double accuracy = 0.0;
  synop_estimate measured;  // per-sample averages, input included
  int64_t ties = 0;
  spike_ledger ledger;
};

struct eval_result {
  double ann_accuracy = 0.0;            // argmax of raw logits
  double ann_accuracy_activated = 0.0;  // argmax after output (q)relu
  synop_estimate estimated;             // Eq.-1 estimate, input term included

  std::vector<snn_eval> snn;
  const snn_eval& primary() const {
    for (const snn_eval& e : snn)
      if (e.factor == 1.0) return e;
    return snn.front();
  }
};

// Dual-path evaluation on the test split: the quantized-activation estimate
// from the analog network next to exact spike counts from the simulator, at
// each requested first-layer compensation factor.
inline eval_result evaluate(const trained_model& model, const dataset& ds,
                            const sim_config& sim,
                            const std::vector<double>& factors = {1.0}) {
  model.validate();
  if (ds.test.empty()) throw config_error("test split is empty");
  const fanout_table table = compute_fanout(model.spec);
  const size_t n = ds.test.size();
  const size_t classes = model.spec.num_classes();

  eval_result out;
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;

  // analog pass, batched
  const size_t eval_batch = 64;
  size_t correct_raw = 0, correct_act = 0;
  std::vector<double> est_layers;
  double est_input = 0.0;
  const bool quantized = model.is_quantized();
  for (size_t lo = 0; lo < n; lo += eval_batch) {
    const size_t hi = std::min(n, lo + eval_batch);
    Tensor batch = make_batch(ds, ds.test, idx, lo, hi, false);
    tape t;
    network_forward fwd = run_network(t, model.spec, model.weights, batch, {});
    std::vector<Tensor> acts;
    for (node* a : fwd.activations) acts.push_back(a->value);
    synop_estimate est = estimate_synops(acts, table, model.spec);
    if (est_layers.empty()) est_layers.assign(est.per_layer.size(), 0.0);
    const double w = static_cast<double>(hi - lo) / static_cast<double>(n);
    for (size_t l = 0; l < est.per_layer.size(); ++l)
      est_layers[l] += est.per_layer[l] * w;
    est_input += estimate_input_synops(batch, table) * w;

    const Tensor& logits = fwd.logits->value;
    for (size_t i = lo; i < hi; ++i) {
      const int64_t row = static_cast<int64_t>(i - lo);
      int64_t best_raw = 0, best_act = 0;
      for (int64_t c = 1; c < static_cast<int64_t>(classes); ++c) {
        if (logits[row * classes + c] > logits[row * classes + best_raw]) best_raw = c;
        const float a = quantized ? qrelu_value(logits[row * classes + c])
                                  : std::max(0.0f, logits[row * classes + c]);
        const float b = quantized ? qrelu_value(logits[row * classes + best_act])
                                  : std::max(0.0f, logits[row * classes + best_act]);
        if (a > b) best_act = c;
      }
      if (static_cast<size_t>(best_raw) == ds.test[i].label) ++correct_raw;
      if (static_cast<size_t>(best_act) == ds.test[i].label) ++correct_act;
    }
  }
  out.ann_accuracy = static_cast<double>(correct_raw) / static_cast<double>(n);
  out.ann_accuracy_activated = static_cast<double>(correct_act) / static_cast<double>(n);
  out.estimated.per_layer = est_layers;
  out.estimated.input_synops = est_input;
  out.estimated.includes_input = true;

  // spiking pass
  for (double f : factors) {
    const trained_model scaled = f == 1.0 ? model : scale_input_weights(model, f);
    snn_network net(scaled, sim.v_th, sim.v_floor);
    spike_ledger merged;
    size_t correct = 0;
    for (size_t i = 0; i < n; ++i) {
      sample_result r = ds.kind == "events"
                            ? run_sample(net, sim, ds.test[i].frame.events)
                            : run_sample(net, sim, ds.test[i].frame.frame);
      if (r.prediction == ds.test[i].label) ++correct;
      merged.merge(r.ledger);
    }
    snn_eval ev;
    ev.factor = f;
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    ev.measured = measure_synops(merged);
    ev.ties = merged.ties;
    ev.ledger = merged;
    out.snn.push_back(std::move(ev));
  }
  return out;
}

// ---- report rows --------------------------------------------------------------------

struct checkpoint_record {
  int64_t steps = 0;
  double accuracy = 0.0;
  double mean_synops = 0.0;
};

struct report_row {
  std::string model_id;
  std::string method;  // baseline | rho-scaled | robust-scaled | synop | synop+quant | spike-L1
  double s0 = 0.0;
  double rho = 1.0;
  eval_result eval;
  weight_stats_result stats;
  std::vector<checkpoint_record> timecourse;
};

struct sweep_report {
  std::vector<report_row> rows;
  uint64_t seed = 0;
  std::vector<trained_model> models;  // aligned with rows
};

// Latency curve for one model: accuracy and mean cumulative SynOps at each
// checkpoint, one simulation pass per sample.
inline std::vector<checkpoint_record> timecourse_curve(const trained_model& model,
                                                       const dataset& ds,
                                                       const sim_config& sim,
                                                       const std::vector<int64_t>& checkpoints) {
  if (checkpoints.empty()) return {};
  snn_network net(model, sim.v_th, sim.v_floor);
  std::vector<checkpoint_record> recs(checkpoints.size());
  for (size_t c = 0; c < checkpoints.size(); ++c) recs[c].steps = checkpoints[c];
  const size_t n = ds.test.size();
  for (size_t i = 0; i < n; ++i) {
    std::vector<timecourse_point> trace =
        ds.kind == "events" ? run_timecourse(net, sim, ds.test[i].frame.events, checkpoints)
                            : run_timecourse(net, sim, ds.test[i].frame.frame, checkpoints);
    for (size_t c = 0; c < trace.size(); ++c) {
      if (trace[c].prediction == ds.test[i].label) recs[c].accuracy += 1.0;
      recs[c].mean_synops += trace[c].cumulative_synops;
    }
  }
  for (checkpoint_record& r : recs) {
    r.accuracy /= static_cast<double>(n);
    r.mean_synops /= static_cast<double>(n);
  }
  return recs;
}

inline report_row make_row(std::string id, std::string method, double s0, double rho,
                           const trained_model& model, const dataset& ds,
                           const experiment_config& cfg) {
  report_row row;
  row.model_id = std::move(id);
  row.method = std::move(method);
  row.s0 = s0;
  row.rho = rho;
  row.eval = evaluate(model, ds, cfg.simulation, cfg.conversion.compensation_factors);
  row.stats = weight_stats(model);
  if (!cfg.checkpoints.empty())
    row.timecourse = timecourse_curve(model, ds, cfg.simulation, cfg.checkpoints);
  return row;
}

// ---- sweeps ------------------------------------------------------------------------

// Chain of warm-started fine-tunings with halving SynOp targets (the paper's
// step-3 procedure). Stage 0 re-trains at the current SynOp level, then each
// stage halves the target until the accuracy floor cuts the chain off.
inline sweep_report sweep_synop_targets(const experiment_config& cfg, const dataset& ds,
                                        const trained_model& baseline) {
  sweep_report report;
  report.seed = cfg.seed;

  report.rows.push_back(make_row("m00-baseline", "baseline", 0.0, 1.0, baseline, ds, cfg));
  report.models.push_back(baseline);

  const sweep_settings& sw = cfg.sweep;
  const network_spec spec = sw.quantize ? baseline.spec.quantized() : baseline.spec;
  const std::string method =
      cfg.loss.mode == penalty_mode::spike_count_l1 ? "spike-L1"
      : sw.quantize                                 ? "synop+quant"
                                                    : "synop";
  const penalty_mode mode = cfg.loss.mode == penalty_mode::spike_count_l1
                                ? penalty_mode::spike_count_l1
                                : penalty_mode::synop_weighted;

  // current activity of the warm-start point, measured on the training split
  const fanout_table table = compute_fanout(spec);
  auto estimate_current = [&](const std::vector<Tensor>& weights) {
    double total = 0.0;
    std::vector<size_t> idx(ds.train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t lo = 0; lo < idx.size(); lo += 64) {
      const size_t hi = std::min(idx.size(), lo + 64);
      Tensor batch = make_batch(ds, ds.train, idx, lo, hi, false);
      tape t;
      network_forward fwd = run_network(t, spec, weights, batch, {});
      std::vector<Tensor> acts;
      for (node* a : fwd.activations) acts.push_back(a->value);
      total += estimate_synops(acts, table, spec).network_total() *
               static_cast<double>(hi - lo);
    }
    return total / static_cast<double>(ds.train.size());
  };

  std::vector<Tensor> start_weights = baseline.weights;
  double current = estimate_current(start_weights);

  // the paper's chain entry point: scale the transferred weights so the SynOp
  // level sits just above the analog MAC count, then start halving from there
  if (sw.start_at_mac && sw.targets.empty() && current > 0.0) {
    const double macs = mac_count(spec);
    const double rho_star = 1.15 * macs / current;
    if (rho_star < 1.0) {
      for (float& w : start_weights.front().data)
        w = static_cast<float>(w * rho_star);
      current = estimate_current(start_weights);
    }
  }

  std::vector<double> targets = sw.targets;
  if (targets.empty()) {
    targets.push_back(current);
    for (int64_t h = 0; h < sw.halvings; ++h) targets.push_back(targets.back() / 2.0);
  }

  const double floor =
      sw.accuracy_floor_factor / static_cast<double>(spec.num_classes());
  std::vector<Tensor> warm = std::move(start_weights);
  for (size_t k = 0; k < targets.size(); ++k) {
    loss_config loss;
    loss.mode = mode;
    loss.s0 = targets[k];
    if (mode == penalty_mode::spike_count_l1)
      loss.alpha = cfg.loss.alpha ? *cfg.loss.alpha : 1.0 / (targets[k] * targets[k]);

    training_settings tr = cfg.training;
    tr.epochs = sw.stage_epochs;
    train_result stage =
        train_network(spec, ds, loss, sw.stage_optimizer, tr,
                      cfg.seed + 1 + static_cast<uint64_t>(k), &warm);
    if (stage.diverged) break;  // keep the partial report

    char id[32];
    std::snprintf(id, sizeof(id), "m%02zu-%s", k + 1, method.c_str());
    report.rows.push_back(make_row(id, method, targets[k], 1.0, stage.model, ds, cfg));
    report.models.push_back(stage.model);
    warm = stage.model.weights;

    if (report.rows.back().eval.primary().accuracy < floor) break;
  }
  return report;
}

// Baseline activity scaling: evaluate the model under a list of first-layer
// scales, optionally after robust percentile normalization.
inline sweep_report sweep_rho(const experiment_config& cfg, const dataset& ds,
                              const trained_model& model, const std::vector<double>& rho_list,
                              bool robust_first) {
  sweep_report report;
  report.seed = cfg.seed;
  trained_model base = model;
  if (robust_first) {
    std::vector<Tensor> calib;
    std::vector<size_t> idx(ds.train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (size_t lo = 0; lo < idx.size(); lo += 64) {
      const size_t hi = std::min(idx.size(), lo + 64);
      calib.push_back(make_batch(ds, ds.train, idx, lo, hi, false));
    }
    base = robust_normalize(model, calib, cfg.conversion.percentile).model;
  }
  const std::string method = robust_first ? "robust-scaled" : "rho-scaled";
  for (size_t i = 0; i < rho_list.size(); ++i) {
    const trained_model scaled =
        rho_list[i] == 1.0 ? base : scale_input_weights(base, rho_list[i]);
    char id[32];
    std::snprintf(id, sizeof(id), "r%02zu-%s", i, method.c_str());
    report.rows.push_back(make_row(id, method, 0.0, rho_list[i], scaled, ds, cfg));
    report.models.push_back(scaled);
  }
  return report;
}

}  // namespace synoptic
