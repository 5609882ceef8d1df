#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synoptic/errors.hpp"
#include "synoptic/harness.hpp"

namespace synoptic {

inline constexpr int report_schema_version = 1;

// Shortest-round-trip decimal for doubles, so emitted numbers parse back to
// the identical bit pattern.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return shorter;
    }
  }
  return buf;
}

// ---- JSON report -----------------------------------------------------------------

inline nlohmann::json to_json(const synop_estimate& e) {
  return {{"per_layer", e.per_layer},
          {"input", e.input_synops},
          {"includes_input", e.includes_input},
          {"total", e.total()}};
}

inline nlohmann::json to_json(const report_row& r, bool joules, double joules_per_synop) {
  nlohmann::json j;
  j["model_id"] = r.model_id;
  j["method"] = r.method;
  j["s0"] = r.s0;
  j["rho"] = r.rho;
  j["ann_accuracy"] = r.eval.ann_accuracy;
  j["ann_accuracy_activated"] = r.eval.ann_accuracy_activated;
  j["estimated"] = to_json(r.eval.estimated);
  j["snn"] = nlohmann::json::array();
  for (const snn_eval& e : r.eval.snn) {
    nlohmann::json s;
    s["factor"] = e.factor;
    s["accuracy"] = e.accuracy;
    s["measured"] = to_json(e.measured);
    s["ties"] = e.ties;
    if (joules) s["joules"] = e.measured.total() * joules_per_synop;
    j["snn"].push_back(std::move(s));
  }
  j["weights"] = {{"null_fraction", r.stats.null_fraction},
                  {"threshold", r.stats.threshold},
                  {"quantiles", r.stats.quantiles},
                  {"median", r.stats.median},
                  {"total", r.stats.total_weights}};
  j["timecourse"] = nlohmann::json::array();
  for (const checkpoint_record& c : r.timecourse)
    j["timecourse"].push_back(
        {{"steps", c.steps}, {"accuracy", c.accuracy}, {"mean_synops", c.mean_synops}});
  return j;
}

inline nlohmann::json report_to_json(const sweep_report& rep, bool joules = false,
                                     double joules_per_synop = 1e-11) {
  nlohmann::json j;
  j["schema_version"] = report_schema_version;
  j["seed"] = rep.seed;
  j["rows"] = nlohmann::json::array();
  for (const report_row& r : rep.rows) j["rows"].push_back(to_json(r, joules, joules_per_synop));
  return j;
}

// ---- CSV report --------------------------------------------------------------------
//
// One line per (model, compensation factor). List-valued fields are
// semicolon-joined. Columns are fixed and documented in the README.

inline std::string csv_join(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

inline std::vector<std::string> report_csv_columns(bool joules) {
  std::vector<std::string> cols = {
      "model_id",   "method",       "s0",           "rho",
      "factor",     "ann_accuracy", "ann_accuracy_activated",
      "snn_accuracy", "ties",       "est_total",    "est_input",
      "est_per_layer", "meas_total", "meas_input",  "meas_per_layer",
      "null_fraction", "median",    "quantiles"};
  if (joules) cols.push_back("joules");
  return cols;
}

inline std::string report_to_csv(const sweep_report& rep, bool joules = false,
                                 double joules_per_synop = 1e-11) {
  std::ostringstream os;
  const std::vector<std::string> cols = report_csv_columns(joules);
  for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const report_row& r : rep.rows) {
    for (const snn_eval& e : r.eval.snn) {
      os << r.model_id << ',' << r.method << ',' << format_double(r.s0) << ','
         << format_double(r.rho) << ',' << format_double(e.factor) << ','
         << format_double(r.eval.ann_accuracy) << ','
         << format_double(r.eval.ann_accuracy_activated) << ','
         << format_double(e.accuracy) << ',' << e.ties << ','
         << format_double(r.eval.estimated.total()) << ','
         << format_double(r.eval.estimated.input_synops) << ','
         << csv_join(r.eval.estimated.per_layer) << ','
         << format_double(e.measured.total()) << ','
         << format_double(e.measured.input_synops) << ','
         << csv_join(e.measured.per_layer) << ','
         << format_double(r.stats.null_fraction) << ','
         << format_double(r.stats.median) << ','
         << csv_join(r.stats.quantiles);
      if (joules) os << ',' << format_double(e.measured.total() * joules_per_synop);
      os << "\n";
    }
  }
  return os.str();
}

// Minimal CSV table reader for the emitted format (no quoted fields needed).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> table;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      row.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    table.push_back(std::move(row));
  }
  return table;
}

inline std::string emit_csv(const std::vector<std::vector<std::string>>& table) {
  std::ostringstream os;
  for (const auto& row : table) {
    for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline void emit_report(const sweep_report& rep, const std::string& path,
                        const std::string& format, bool joules = false,
                        double joules_per_synop = 1e-11) {
  if (format == "csv") {
    write_text_file(path, report_to_csv(rep, joules, joules_per_synop));
  } else if (format == "json") {
    write_text_file(path, report_to_json(rep, joules, joules_per_synop).dump(2) + "\n");
  } else {
    throw config_error("unknown report format '" + format + "'");
  }
}

}  // namespace synoptic
