#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synoptic/errors.hpp"
#include "synoptic/network.hpp"
#include "synoptic/tensor.hpp"
#include "synoptic/util.hpp"

namespace synoptic {

struct model_metadata {
  std::string loss_mode = "none";
  double s0 = 0.0;
  double rho_applied = 1.0;          // accumulated first-layer scaling
  double output_scale_applied = 1.0; // accumulated last-layer scaling
  bool robust_normalized = false;
  uint64_t seed = 0;

  bool operator==(const model_metadata&) const = default;
};

inline nlohmann::json to_json(const model_metadata& m) {
  nlohmann::json j;
  j["loss_mode"] = m.loss_mode;
  j["s0"] = m.s0;
  j["rho_applied"] = m.rho_applied;
  j["output_scale_applied"] = m.output_scale_applied;
  j["robust_normalized"] = m.robust_normalized;
  j["seed"] = m.seed;
  return j;
}

inline model_metadata metadata_from_json(const nlohmann::json& j) {
  model_metadata m;
  m.loss_mode = j.at("loss_mode").get<std::string>();
  m.s0 = j.at("s0").get<double>();
  m.rho_applied = j.at("rho_applied").get<double>();
  m.output_scale_applied = j.at("output_scale_applied").get<double>();
  m.robust_normalized = j.at("robust_normalized").get<bool>();
  m.seed = j.at("seed").get<uint64_t>();
  return m;
}

// A trained network: spec, weight tensors in weighted-layer order, and the
// training/conversion metadata needed to reproduce or audit it.
struct trained_model {
  network_spec spec;
  std::vector<Tensor> weights;
  model_metadata meta;

  void validate() const {
    spec.validate();
    const std::vector<size_t> wi = spec.weighted_indices();
    if (weights.size() != wi.size())
      throw config_error("model has " + std::to_string(weights.size()) +
                         " weight tensors, spec needs " + std::to_string(wi.size()));
    for (size_t i = 0; i < wi.size(); ++i) {
      if (weights[i].shape != spec.weight_shape(wi[i]))
        throw config_error("weight tensor " + std::to_string(i) + " has shape " +
                           weights[i].shape_string() + ", spec expects different extents");
    }
  }

  bool is_quantized() const { return spec.is_quantized(); }
};

// ---- model container ("SYNM") ----------------------------------------------
//
//   "SYNM" | u32 version | u64 json_len | json bytes | u32 n_tensors
//   per tensor: u32 rank | u64 extents[rank] | f32 data[numel]
//   u32 crc32 of everything above
//
// Everything little-endian. The JSON blob is canonical (sorted keys, shortest
// round-trip floats), so identical models serialize to identical bytes.

inline constexpr uint32_t model_format_version = 1;

inline void save_model(const trained_model& model, const std::string& path) {
  model.validate();
  std::ostringstream body(std::ios::binary);
  body.write("SYNM", 4);
  write_le<uint32_t>(body, model_format_version);

  nlohmann::json j;
  j["network"] = to_json(model.spec);
  j["metadata"] = to_json(model.meta);
  const std::string blob = j.dump();
  write_le<uint64_t>(body, blob.size());
  body.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  write_le<uint32_t>(body, static_cast<uint32_t>(model.weights.size()));
  for (const Tensor& t : model.weights) {
    write_le<uint32_t>(body, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape) write_le<uint64_t>(body, static_cast<uint64_t>(e));
    for (float v : t.data) write_le<float>(body, v);
  }

  const std::string bytes = body.str();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  write_le<uint32_t>(out, crc32(bytes));
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline trained_model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open model file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 4 + 4)
    throw io_error("model file '" + path + "' is truncated");

  const std::string payload = bytes.substr(0, bytes.size() - 4);
  std::istringstream crc_in(bytes.substr(bytes.size() - 4));
  const uint32_t stored_crc = read_le<uint32_t>(crc_in);
  if (crc32(payload) != stored_crc)
    throw io_error("model file '" + path + "' failed its checksum");

  std::istringstream is(payload, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SYNM")
    throw io_error("'" + path + "' is not a model file (bad magic)");
  const uint32_t version = read_le<uint32_t>(is);
  if (version != model_format_version)
    throw io_error("model file version " + std::to_string(version) +
                   " is not supported (expected " +
                   std::to_string(model_format_version) + ")");

  const uint64_t blob_len = read_le<uint64_t>(is);
  std::string blob(blob_len, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(blob_len));
  if (!is) throw io_error("model file '" + path + "' is truncated inside metadata");

  trained_model model;
  try {
    nlohmann::json j = nlohmann::json::parse(blob);
    model.spec = network_from_json(j.at("network"));
    model.meta = metadata_from_json(j.at("metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw io_error("model file '" + path + "' has malformed metadata: " + e.what());
  }

  const uint32_t n_tensors = read_le<uint32_t>(is);
  for (uint32_t t = 0; t < n_tensors; ++t) {
    const uint32_t rank = read_le<uint32_t>(is);
    std::vector<int64_t> shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = static_cast<int64_t>(read_le<uint64_t>(is));
    Tensor tensor(shape);
    for (int64_t i = 0; i < tensor.numel(); ++i) tensor[i] = read_le<float>(is);
    model.weights.push_back(std::move(tensor));
  }
  model.validate();
  return model;
}

}  // namespace synoptic
