#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synoptic/errors.hpp"
#include "synoptic/harness.hpp"

namespace synoptic {

// Experiment configs are JSON trees. Parsing is strict: an unknown key
// anywhere is a hard error, so a typo cannot silently fall back to a default
// and invalidate a sweep.

namespace detail {

inline void get_if(const nlohmann::json& j, const char* key, double& out) {
  if (j.contains(key)) out = j.at(key).get<double>();
}
inline void get_if(const nlohmann::json& j, const char* key, bool& out) {
  if (j.contains(key)) out = j.at(key).get<bool>();
}
inline void get_if(const nlohmann::json& j, const char* key, int64_t& out) {
  if (j.contains(key)) out = j.at(key).get<int64_t>();
}
inline void get_if(const nlohmann::json& j, const char* key, uint64_t& out) {
  if (j.contains(key)) out = j.at(key).get<uint64_t>();
}
inline void get_if(const nlohmann::json& j, const char* key, std::string& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}
inline void get_if(const nlohmann::json& j, const char* key, std::vector<double>& out) {
  if (j.contains(key)) out = j.at(key).get<std::vector<double>>();
}
inline void get_if(const nlohmann::json& j, const char* key, std::vector<int64_t>& out) {
  if (j.contains(key)) out = j.at(key).get<std::vector<int64_t>>();
}

}  // namespace detail

inline optimizer_settings optimizer_from_json(const nlohmann::json& j,
                                              const std::string& where,
                                              optimizer_settings base = {}) {
  detail::require_keys(j,
                       {"lr", "milestones", "decay_factor", "weight_decay",
                        "decoupled_decay", "beta1", "beta2", "epsilon"},
                       where);
  optimizer_settings o = base;
  detail::get_if(j, "lr", o.lr);
  detail::get_if(j, "milestones", o.milestones);
  detail::get_if(j, "decay_factor", o.decay_factor);
  detail::get_if(j, "weight_decay", o.weight_decay);
  detail::get_if(j, "decoupled_decay", o.decoupled_decay);
  detail::get_if(j, "beta1", o.beta1);
  detail::get_if(j, "beta2", o.beta2);
  detail::get_if(j, "epsilon", o.epsilon);
  if (o.lr <= 0) throw config_error(where + ": lr must be positive");
  return o;
}

inline nlohmann::json optimizer_to_json(const optimizer_settings& o) {
  return {{"lr", o.lr},
          {"milestones", o.milestones},
          {"decay_factor", o.decay_factor},
          {"weight_decay", o.weight_decay},
          {"decoupled_decay", o.decoupled_decay},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon}};
}

inline experiment_config config_from_json(const nlohmann::json& j) {
  detail::require_keys(j,
                       {"dataset", "network", "loss", "optimizer", "training", "seed",
                        "conversion", "simulation", "checkpoints", "sweep", "report"},
                       "config");
  experiment_config c;
  if (!j.contains("network")) throw config_error("config: 'network' is required");
  c.network = network_from_json(j.at("network"));
  detail::get_if(j, "dataset", c.dataset_root);
  detail::get_if(j, "seed", c.seed);

  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    detail::require_keys(l, {"mode", "s0", "alpha"}, "config.loss");
    std::string mode = "none";
    detail::get_if(l, "mode", mode);
    if (mode == "none") c.loss.mode = penalty_mode::none;
    else if (mode == "synop") c.loss.mode = penalty_mode::synop_weighted;
    else if (mode == "spike-l1") c.loss.mode = penalty_mode::spike_count_l1;
    else throw config_error("config.loss.mode: unknown value '" + mode + "'");
    detail::get_if(l, "s0", c.loss.s0);
    if (l.contains("alpha")) c.loss.alpha = l.at("alpha").get<double>();
  }

  if (j.contains("optimizer"))
    c.optimizer = optimizer_from_json(j.at("optimizer"), "config.optimizer");

  if (j.contains("training")) {
    const auto& t = j.at("training");
    detail::require_keys(t, {"epochs", "batch_size", "augment"}, "config.training");
    detail::get_if(t, "epochs", c.training.epochs);
    detail::get_if(t, "batch_size", c.training.batch_size);
    if (t.contains("augment")) {
      const auto& a = t.at("augment");
      detail::require_keys(a, {"crop_padding", "flip_probability", "normalize"},
                           "config.training.augment");
      c.training.use_augment = true;
      detail::get_if(a, "crop_padding", c.training.augment.crop_padding);
      detail::get_if(a, "flip_probability", c.training.augment.flip_probability);
      detail::get_if(a, "normalize", c.training.augment.normalize);
    }
    if (c.training.epochs <= 0 || c.training.batch_size <= 0)
      throw config_error("config.training: epochs and batch_size must be positive");
  }

  if (j.contains("conversion")) {
    const auto& v = j.at("conversion");
    detail::require_keys(v, {"rho_list", "robust", "percentile", "compensation_factors"},
                         "config.conversion");
    detail::get_if(v, "rho_list", c.conversion.rho_list);
    detail::get_if(v, "robust", c.conversion.robust);
    detail::get_if(v, "percentile", c.conversion.percentile);
    detail::get_if(v, "compensation_factors", c.conversion.compensation_factors);
    if (c.conversion.compensation_factors.empty())
      throw config_error("config.conversion: compensation_factors cannot be empty");
  }

  if (j.contains("simulation")) {
    const auto& s = j.at("simulation");
    detail::require_keys(s, {"mode", "dt_us", "n_dt", "reset_between_samples", "v_floor",
                             "v_th"},
                         "config.simulation");
    std::string mode = "event-replay";
    detail::get_if(s, "mode", mode);
    if (mode == "event-replay") c.simulation.mode = sim_config::input_mode::event_replay;
    else if (mode == "constant-current")
      c.simulation.mode = sim_config::input_mode::constant_current;
    else throw config_error("config.simulation.mode: unknown value '" + mode + "'");
    detail::get_if(s, "dt_us", c.simulation.dt_us);
    detail::get_if(s, "n_dt", c.simulation.n_dt);
    detail::get_if(s, "reset_between_samples", c.simulation.reset_between_samples);
    detail::get_if(s, "v_floor", c.simulation.v_floor);
    detail::get_if(s, "v_th", c.simulation.v_th);
    if (c.simulation.n_dt < 1 || c.simulation.dt_us <= 0)
      throw config_error("config.simulation: n_dt >= 1 and dt_us > 0 required");
  }

  detail::get_if(j, "checkpoints", c.checkpoints);

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::require_keys(s,
                         {"halvings", "targets", "accuracy_floor_factor", "quantize",
                          "start_at_mac", "stage_epochs", "stage_optimizer"},
                         "config.sweep");
    detail::get_if(s, "halvings", c.sweep.halvings);
    detail::get_if(s, "targets", c.sweep.targets);
    detail::get_if(s, "accuracy_floor_factor", c.sweep.accuracy_floor_factor);
    if (s.contains("quantize")) c.sweep.quantize = s.at("quantize").get<bool>();
    if (s.contains("start_at_mac"))
      c.sweep.start_at_mac = s.at("start_at_mac").get<bool>();
    detail::get_if(s, "stage_epochs", c.sweep.stage_epochs);
    if (s.contains("stage_optimizer"))
      c.sweep.stage_optimizer = optimizer_from_json(
          s.at("stage_optimizer"), "config.sweep.stage_optimizer", c.sweep.stage_optimizer);
  }

  if (j.contains("report")) {
    const auto& r = j.at("report");
    detail::require_keys(r, {"joules_per_synop", "include_joules"}, "config.report");
    detail::get_if(r, "joules_per_synop", c.joules_per_synop);
    detail::get_if(r, "include_joules", c.report_joules);
  }
  return c;
}

inline nlohmann::json config_to_json(const experiment_config& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset_root;
  j["network"] = to_json(c.network);
  j["loss"] = {{"mode", to_string(c.loss.mode)}, {"s0", c.loss.s0}};
  if (c.loss.alpha) j["loss"]["alpha"] = *c.loss.alpha;
  j["optimizer"] = optimizer_to_json(c.optimizer);
  j["training"] = {{"epochs", c.training.epochs}, {"batch_size", c.training.batch_size}};
  if (c.training.use_augment)
    j["training"]["augment"] = {{"crop_padding", c.training.augment.crop_padding},
                                {"flip_probability", c.training.augment.flip_probability},
                                {"normalize", c.training.augment.normalize}};
  j["seed"] = c.seed;
  j["conversion"] = {{"rho_list", c.conversion.rho_list},
                     {"robust", c.conversion.robust},
                     {"percentile", c.conversion.percentile},
                     {"compensation_factors", c.conversion.compensation_factors}};
  j["simulation"] = {
      {"mode", c.simulation.mode == sim_config::input_mode::event_replay
                   ? "event-replay"
                   : "constant-current"},
      {"dt_us", c.simulation.dt_us},
      {"n_dt", c.simulation.n_dt},
      {"reset_between_samples", c.simulation.reset_between_samples},
      {"v_floor", c.simulation.v_floor},
      {"v_th", c.simulation.v_th}};
  j["checkpoints"] = c.checkpoints;
  j["sweep"] = {{"halvings", c.sweep.halvings},
                {"targets", c.sweep.targets},
                {"accuracy_floor_factor", c.sweep.accuracy_floor_factor},
                {"quantize", c.sweep.quantize},
                {"start_at_mac", c.sweep.start_at_mac},
                {"stage_epochs", c.sweep.stage_epochs},
                {"stage_optimizer", optimizer_to_json(c.sweep.stage_optimizer)}};
  j["report"] = {{"joules_per_synop", c.joules_per_synop},
                 {"include_joules", c.report_joules}};
  return j;
}

// Applies a dotted-path override ("optimizer.lr=0.0005") onto the raw JSON
// tree. The path must already exist, or sit inside an existing section, so a
// typo is caught by the strict parse afterwards.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw config_error("override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;  // unquoted strings are taken literally
  }

  nlohmann::json* cursor = &j;
  size_t start = 0;
  std::vector<std::string> keys;
  while (start <= path.size()) {
    const size_t dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (size_t i = 0; i + 1 < keys.size(); ++i) {
    nlohmann::json& next = (*cursor)[keys[i]];
    if (next.is_null()) next = nlohmann::json::object();
    if (!next.is_object())
      throw config_error("override path '" + path + "' crosses the non-object key '" +
                         keys[i] + "'");
    cursor = &next;
  }
  (*cursor)[keys.back()] = value;
}

inline experiment_config load_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

}  // namespace synoptic
