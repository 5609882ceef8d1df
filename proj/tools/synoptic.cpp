// synoptic: train energy-penalized quantized CNNs, convert them to spiking
// networks, simulate event or constant-current inputs, and emit
// accuracy/SynOps reports.
//
// Exit codes: 0 success, 1 validation or training failure, 2 I/O failure.
// stdout carries data, stderr carries diagnostics.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "synoptic/config.hpp"
#include "synoptic/convert.hpp"
#include "synoptic/dataset.hpp"
#include "synoptic/errors.hpp"
#include "synoptic/harness.hpp"
#include "synoptic/model.hpp"
#include "synoptic/report.hpp"
#include "synoptic/selftest.hpp"
#include "synoptic/version.hpp"

namespace fs = std::filesystem;
using namespace synoptic;

namespace {

uint64_t resolve_seed(bool seed_given, uint64_t seed_flag, const uint64_t* config_seed) {
  if (seed_given) return seed_flag;
  if (config_seed) return *config_seed;
  if (const char* env = std::getenv("SYNOPTIC_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw config_error("SYNOPTIC_SEED is not an integer");
    }
  }
  return 1;
}

// Every artifact-producing command records what it did and the checksums of
// what it wrote, so a run can be reproduced or audited from the manifest.
class run_manifest {
 public:
  run_manifest(std::string command, uint64_t seed) {
    j_["tool_version"] = version_string;
    j_["command"] = std::move(command);
    j_["seed"] = seed;
    j_["outputs"] = nlohmann::json::object();
  }

  void set_config(const nlohmann::json& snapshot) { j_["config"] = snapshot; }

  void add_output(const fs::path& out_dir, const std::string& rel) {
    std::ifstream in(out_dir / rel, std::ios::binary);
    if (!in) throw io_error("manifest: missing output '" + rel + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", crc32(bytes));
    j_["outputs"][rel] = hex;
  }

  void write(const fs::path& out_dir) {
    std::ofstream out(out_dir / "run_manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write run manifest");
    out << j_.dump(2) << "\n";
  }

 private:
  nlohmann::json j_;
};

std::vector<Tensor> calibration_batches(const dataset& ds) {
  std::vector<Tensor> batches;
  std::vector<size_t> idx(ds.train.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (size_t lo = 0; lo < idx.size(); lo += 64) {
    const size_t hi = std::min(idx.size(), lo + 64);
    batches.push_back(make_batch(ds, ds.train, idx, lo, hi, false));
  }
  return batches;
}

void write_eval_json(const eval_result& ev, const fs::path& path) {
  nlohmann::json j;
  j["ann_accuracy"] = ev.ann_accuracy;
  j["ann_accuracy_activated"] = ev.ann_accuracy_activated;
  j["estimated"] = to_json(ev.estimated);
  j["snn"] = nlohmann::json::array();
  for (const snn_eval& e : ev.snn) {
    nlohmann::json s;
    s["factor"] = e.factor;
    s["accuracy"] = e.accuracy;
    s["measured"] = to_json(e.measured);
    s["ties"] = e.ties;
    s["ledger"] = {{"layer_spikes", e.ledger.layer_spikes},
                   {"layer_synops", e.ledger.layer_synops},
                   {"input_count", e.ledger.input_count},
                   {"input_synops", e.ledger.input_synops},
                   {"output_per_step", e.ledger.output_per_step},
                   {"samples", e.ledger.samples},
                   {"ties", e.ledger.ties}};
    j["snn"].push_back(std::move(s));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

std::string training_log_csv(const std::vector<epoch_log>& log) {
  std::ostringstream os;
  os << "epoch,lr,cross_entropy,penalty,est_synops,train_accuracy\n";
  for (const epoch_log& e : log)
    os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.ce) << ','
       << format_double(e.penalty) << ',' << format_double(e.est_synops) << ','
       << format_double(e.train_accuracy) << "\n";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SynOp-aware CNN training and spiking-network simulation"};
  app.set_version_flag("--version", version_string);
  app.require_subcommand(1);

  // ---- prepare-data ----
  auto* prep = app.add_subcommand("prepare-data", "build a dataset directory");
  std::string prep_out, prep_input, prep_synth, prep_kind = "events", prep_sensor;
  double prep_test_fraction = 0.2;
  uint64_t prep_seed = 0;
  bool prep_seed_given = false;
  prep->add_option("--out", prep_out, "dataset output directory")->required();
  prep->add_option("--input", prep_input, "directory of recorded samples");
  prep->add_option("--input-kind", prep_kind, "events (default) or images");
  prep->add_option("--sensor", prep_sensor, "sensor size WxH for CSV event imports");
  prep->add_option("--synthetic", prep_synth,
                   "generate synthetic data: classes=K,streams=N[,events=3000]"
                   "[,width=16][,height=16]");
  prep->add_option("--test-fraction", prep_test_fraction, "held-out fraction");
  prep->add_option("--seed", prep_seed, "split/generation seed")
      ->each([&](const std::string&) { prep_seed_given = true; });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train a model from a config");
  std::string train_config, train_out;
  std::vector<std::string> train_overrides;
  uint64_t train_seed = 0;
  bool train_seed_given = false;
  train_cmd->add_option("--config", train_config, "experiment config JSON")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--set,-D", train_overrides,
                        "config override as dotted.path=value");
  train_cmd->add_option("--seed", train_seed, "seed override")
      ->each([&](const std::string&) { train_seed_given = true; });

  // ---- convert ----
  auto* conv_cmd = app.add_subcommand("convert", "rescale/normalize a trained model");
  std::string conv_model, conv_out_model, conv_calibration;
  double conv_rho = 1.0, conv_out_scale = 1.0, conv_percentile = 99.0;
  bool conv_robust = false, conv_stats = false;
  conv_cmd->add_option("--model", conv_model, "input model file")->required();
  conv_cmd->add_option("--out-model", conv_out_model, "output model file")->required();
  conv_cmd->add_option("--rho", conv_rho, "first-layer weight scale");
  conv_cmd->add_option("--scale-output", conv_out_scale, "last-layer weight scale");
  conv_cmd->add_flag("--robust", conv_robust, "robust percentile normalization");
  conv_cmd->add_option("--percentile", conv_percentile, "normalization percentile");
  conv_cmd->add_option("--calibration", conv_calibration,
                       "dataset directory for normalization forward passes");
  conv_cmd->add_flag("--stats", conv_stats, "print weight statistics JSON");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "run a model on the spiking simulator");
  std::string sim_model, sim_data, sim_out, sim_mode = "event-replay";
  int64_t sim_ndt = 10, sim_dt_us = 1000;
  double sim_factor = 1.0;
  std::vector<int64_t> sim_checkpoints;
  bool sim_v_floor = false;
  sim_cmd->add_option("--model", sim_model, "model file")->required();
  sim_cmd->add_option("--data", sim_data, "dataset directory")->required();
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--mode", sim_mode, "event-replay or constant-current");
  sim_cmd->add_option("--n-dt", sim_ndt, "constant-current steps");
  sim_cmd->add_option("--dt-us", sim_dt_us, "event bin width in microseconds");
  sim_cmd->add_option("--factor", sim_factor, "first-layer compensation factor");
  sim_cmd->add_option("--checkpoints", sim_checkpoints, "timecourse read-out steps");
  sim_cmd->add_flag("--v-floor", sim_v_floor, "clamp membranes at zero");

  // ---- sweep ----
  auto* sweep_cmd = app.add_subcommand("sweep", "run a SynOp-target or rho sweep");
  std::string sweep_config, sweep_out, sweep_mode = "synop", sweep_model;
  std::vector<std::string> sweep_overrides;
  int64_t sweep_halvings = -1;
  std::vector<double> sweep_rho_list;
  uint64_t sweep_seed = 0;
  bool sweep_seed_given = false;
  sweep_cmd->add_option("--config", sweep_config, "experiment config JSON")->required();
  sweep_cmd->add_option("--out", sweep_out, "output directory")->required();
  sweep_cmd->add_option("--mode", sweep_mode, "synop | spike-l1 | rho | robust");
  sweep_cmd->add_option("--model", sweep_model,
                        "baseline model file (trains one when omitted)");
  sweep_cmd->add_option("--halvings", sweep_halvings, "number of target halvings");
  sweep_cmd->add_option("--rho-list", sweep_rho_list, "scales for rho/robust sweeps");
  sweep_cmd->add_option("--set,-D", sweep_overrides, "config override dotted.path=value");
  sweep_cmd->add_option("--seed", sweep_seed, "seed override")
      ->each([&](const std::string&) { sweep_seed_given = true; });

  // ---- report ----
  auto* rep_cmd = app.add_subcommand("report", "re-emit a report file");
  std::string rep_in, rep_out, rep_format = "csv";
  bool rep_joules = false;
  double rep_jps = 1e-11;
  rep_cmd->add_option("--in", rep_in, "report JSON produced by sweep/simulate")->required();
  rep_cmd->add_option("--out", rep_out, "output file")->required();
  rep_cmd->add_option("--format", rep_format, "csv or json");
  rep_cmd->add_flag("--joules", rep_joules, "append a joules column");
  rep_cmd->add_option("--joules-per-synop", rep_jps, "energy per synaptic operation");

  // ---- selftest ----
  auto* self_cmd = app.add_subcommand("selftest", "run the fast invariant suite");
  bool self_json = false, self_fault = false;
  self_cmd->add_flag("--json", self_json, "machine-readable output");
  self_cmd->add_flag("--inject-fault", self_fault, "force a failure (for testing)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prep) {
      const uint64_t seed = resolve_seed(prep_seed_given, prep_seed, nullptr);
      fs::create_directories(prep_out);
      dataset_manifest m;
      if (!prep_synth.empty()) {
        size_t classes = 4, streams = 200, events = 3000;
        uint16_t width = 16, height = 16;
        std::istringstream ss(prep_synth);
        std::string kv;
        while (std::getline(ss, kv, ',')) {
          const size_t eq = kv.find('=');
          if (eq == std::string::npos)
            throw config_error("--synthetic: expected k=v, got '" + kv + "'");
          const std::string k = kv.substr(0, eq);
          const long v = std::stol(kv.substr(eq + 1));
          if (k == "classes") classes = static_cast<size_t>(v);
          else if (k == "streams") streams = static_cast<size_t>(v);
          else if (k == "events") events = static_cast<size_t>(v);
          else if (k == "width") width = static_cast<uint16_t>(v);
          else if (k == "height") height = static_cast<uint16_t>(v);
          else throw config_error("--synthetic: unknown key '" + k + "'");
        }
        m = prepare_synthetic_dataset(prep_out, classes, streams, events, width,
                                      height, seed, prep_test_fraction);
      } else if (!prep_input.empty()) {
        if (prep_kind == "events") {
          uint16_t sw = 0, sh = 0;
          if (!prep_sensor.empty()) {
            unsigned int w = 0, h = 0;
            if (std::sscanf(prep_sensor.c_str(), "%ux%u", &w, &h) != 2 || !w || !h)
              throw config_error("--sensor expects WxH, e.g. 16x16");
            sw = static_cast<uint16_t>(w);
            sh = static_cast<uint16_t>(h);
          }
          m = import_events_dataset(prep_input, prep_out, seed, prep_test_fraction,
                                    3000, sw, sh);
        } else if (prep_kind == "images") {
          m = import_images_dataset(prep_input, prep_out, seed, prep_test_fraction);
        } else {
          throw config_error("--input-kind must be events or images");
        }
      } else {
        throw config_error("prepare-data needs --synthetic or --input");
      }
      run_manifest rm("prepare-data", seed);
      rm.add_output(prep_out, "manifest.json");
      rm.write(prep_out);
      std::cout << "dataset: " << m.train.size() + m.test.size() << " samples, "
                << m.train.size() << " train / " << m.test.size() << " test, "
                << m.num_classes << " classes\n";
    }

    if (*train_cmd) {
      experiment_config cfg = load_config(train_config, train_overrides);
      const uint64_t seed = resolve_seed(train_seed_given, train_seed, &cfg.seed);
      cfg.seed = seed;
      dataset ds = load_dataset(cfg.dataset_root);
      train_result r = train_network(cfg.network, ds, cfg.loss, cfg.optimizer,
                                     cfg.training, seed);
      fs::create_directories(train_out);
      save_model(r.model, (fs::path(train_out) / "model.synm").string());
      write_text_file((fs::path(train_out) / "training_log.csv").string(),
                      training_log_csv(r.log));
      run_manifest rm("train", seed);
      rm.set_config(config_to_json(cfg));
      rm.add_output(train_out, "model.synm");
      rm.add_output(train_out, "training_log.csv");
      rm.write(train_out);
      if (r.diverged) {
        std::cerr << "training diverged; last good checkpoint written\n";
        return 1;
      }
      std::cout << "trained " << cfg.training.epochs << " epochs, final accuracy "
                << r.log.back().train_accuracy << "\n";
    }

    if (*conv_cmd) {
      trained_model model = load_model(conv_model);
      if (conv_robust) {
        if (conv_calibration.empty())
          throw config_error("--robust needs --calibration <dataset>");
        dataset ds = load_dataset(conv_calibration);
        model = robust_normalize(model, calibration_batches(ds), conv_percentile).model;
      }
      if (conv_rho != 1.0) {
        if (scaling_changes_behavior(model))
          std::cerr << "warning: scaling a quantized model changes its behavior "
                       "(scale invariance only holds for pure relu networks)\n";
        model = scale_input_weights(model, conv_rho);
      }
      if (conv_out_scale != 1.0) model = scale_output_weights(model, conv_out_scale);
      save_model(model, conv_out_model);
      if (conv_stats) {
        const weight_stats_result s = weight_stats(model);
        nlohmann::json j = {{"null_fraction", s.null_fraction},
                            {"threshold", s.threshold},
                            {"quantiles", s.quantiles},
                            {"median", s.median},
                            {"total", s.total_weights}};
        std::cout << j.dump(2) << "\n";
      }
    }

    if (*sim_cmd) {
      trained_model model = load_model(sim_model);
      dataset ds = load_dataset(sim_data);
      sim_config sc;
      if (sim_mode == "event-replay") sc.mode = sim_config::input_mode::event_replay;
      else if (sim_mode == "constant-current")
        sc.mode = sim_config::input_mode::constant_current;
      else throw config_error("--mode must be event-replay or constant-current");
      sc.n_dt = sim_ndt;
      sc.dt_us = sim_dt_us;
      sc.v_floor = sim_v_floor;
      eval_result ev = evaluate(model, ds, sc, {sim_factor});
      fs::create_directories(sim_out);
      write_eval_json(ev, fs::path(sim_out) / "eval.json");
      run_manifest rm("simulate", 0);
      rm.add_output(sim_out, "eval.json");
      if (!sim_checkpoints.empty()) {
        const trained_model scaled =
            sim_factor == 1.0 ? model : scale_input_weights(model, sim_factor);
        std::vector<checkpoint_record> recs =
            timecourse_curve(scaled, ds, sc, sim_checkpoints);
        nlohmann::json j = nlohmann::json::array();
        for (const checkpoint_record& c : recs)
          j.push_back({{"steps", c.steps},
                       {"accuracy", c.accuracy},
                       {"mean_synops", c.mean_synops}});
        write_text_file((fs::path(sim_out) / "timecourse.json").string(),
                        j.dump(2) + "\n");
        rm.add_output(sim_out, "timecourse.json");
      }
      rm.write(sim_out);
      std::cout << "snn accuracy " << ev.snn.front().accuracy << ", measured synops "
                << ev.snn.front().measured.total() << "\n";
    }

    if (*sweep_cmd) {
      experiment_config cfg = load_config(sweep_config, sweep_overrides);
      const uint64_t seed = resolve_seed(sweep_seed_given, sweep_seed, &cfg.seed);
      cfg.seed = seed;
      if (sweep_halvings >= 0) cfg.sweep.halvings = sweep_halvings;
      if (sweep_mode == "spike-l1") cfg.loss.mode = penalty_mode::spike_count_l1;
      dataset ds = load_dataset(cfg.dataset_root);

      trained_model baseline;
      if (!sweep_model.empty()) {
        baseline = load_model(sweep_model);
      } else {
        loss_config none;
        train_result r = train_network(cfg.network, ds, none, cfg.optimizer,
                                       cfg.training, seed);
        if (r.diverged) {
          std::cerr << "baseline training diverged\n";
          return 1;
        }
        baseline = r.model;
      }

      sweep_report report;
      if (sweep_mode == "synop" || sweep_mode == "spike-l1") {
        report = sweep_synop_targets(cfg, ds, baseline);
      } else if (sweep_mode == "rho" || sweep_mode == "robust") {
        const std::vector<double>& rhos =
            sweep_rho_list.empty() ? cfg.conversion.rho_list : sweep_rho_list;
        report = sweep_rho(cfg, ds, baseline, rhos, sweep_mode == "robust");
      } else {
        throw config_error("--mode must be synop, spike-l1, rho or robust");
      }

      fs::create_directories(sweep_out);
      emit_report(report, (fs::path(sweep_out) / "report.json").string(), "json",
                  cfg.report_joules, cfg.joules_per_synop);
      emit_report(report, (fs::path(sweep_out) / "report.csv").string(), "csv",
                  cfg.report_joules, cfg.joules_per_synop);
      run_manifest rm("sweep", seed);
      rm.set_config(config_to_json(cfg));
      for (size_t i = 0; i < report.models.size(); ++i) {
        const std::string name = report.rows[i].model_id + ".synm";
        save_model(report.models[i], (fs::path(sweep_out) / name).string());
        rm.add_output(sweep_out, name);
      }
      rm.add_output(sweep_out, "report.json");
      rm.add_output(sweep_out, "report.csv");
      rm.write(sweep_out);
      std::cout << "sweep: " << report.rows.size() << " rows\n";
    }

    if (*rep_cmd) {
      std::ifstream in(rep_in);
      if (!in) throw io_error("cannot open report '" + rep_in + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const nlohmann::json::exception& e) {
        throw io_error("report '" + rep_in + "' is not valid JSON: " + e.what());
      }
      if (rep_format == "json") {
        write_text_file(rep_out, j.dump(2) + "\n");
      } else if (rep_format == "csv") {
        // flatten rows straight from the JSON so report stays lossless
        std::ostringstream os;
        const bool joules = rep_joules;
        const std::vector<std::string> cols = report_csv_columns(joules);
        for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
        os << "\n";
        for (const auto& row : j.at("rows")) {
          for (const auto& s : row.at("snn")) {
            auto list = [](const nlohmann::json& arr) {
              std::vector<double> v = arr.get<std::vector<double>>();
              return csv_join(v);
            };
            os << row.at("model_id").get<std::string>() << ','
               << row.at("method").get<std::string>() << ','
               << format_double(row.at("s0").get<double>()) << ','
               << format_double(row.at("rho").get<double>()) << ','
               << format_double(s.at("factor").get<double>()) << ','
               << format_double(row.at("ann_accuracy").get<double>()) << ','
               << format_double(row.at("ann_accuracy_activated").get<double>()) << ','
               << format_double(s.at("accuracy").get<double>()) << ','
               << s.at("ties").get<int64_t>() << ','
               << format_double(row.at("estimated").at("total").get<double>()) << ','
               << format_double(row.at("estimated").at("input").get<double>()) << ','
               << list(row.at("estimated").at("per_layer")) << ','
               << format_double(s.at("measured").at("total").get<double>()) << ','
               << format_double(s.at("measured").at("input").get<double>()) << ','
               << list(s.at("measured").at("per_layer")) << ','
               << format_double(row.at("weights").at("null_fraction").get<double>()) << ','
               << format_double(row.at("weights").at("median").get<double>()) << ','
               << list(row.at("weights").at("quantiles"));
            if (joules)
              os << ',' << format_double(s.at("measured").at("total").get<double>() * rep_jps);
            os << "\n";
          }
        }
        write_text_file(rep_out, os.str());
      } else {
        throw config_error("--format must be csv or json");
      }
    }

    if (*self_cmd) {
      const std::vector<selftest_entry> results = run_selftest(self_fault);
      bool all = true;
      if (self_json) {
        nlohmann::json j = nlohmann::json::array();
        for (const selftest_entry& e : results) {
          j.push_back({{"name", e.name}, {"pass", e.pass}, {"note", e.note}});
          all = all && e.pass;
        }
        std::cout << j.dump(2) << "\n";
      } else {
        for (const selftest_entry& e : results) {
          std::cout << (e.pass ? "[PASS] " : "[FAIL] ") << e.name << " (" << e.note
                    << ")\n";
          all = all && e.pass;
        }
      }
      if (!all) return 1;
    }
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
