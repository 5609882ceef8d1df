#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synoptic/errors.hpp"
#include "synoptic/tensor.hpp"

namespace synoptic {

enum class layer_kind { conv2d, avgpool2d, linear, relu, qrelu, dropout };

enum class output_activation_kind { none, relu, qrelu };

inline std::string to_string(layer_kind k) {
  switch (k) {
    case layer_kind::conv2d: return "conv";
    case layer_kind::avgpool2d: return "avgpool";
    case layer_kind::linear: return "linear";
    case layer_kind::relu: return "relu";
    case layer_kind::qrelu: return "qrelu";
    case layer_kind::dropout: return "dropout";
  }
  return "?";
}

struct pair2 {
  int64_t h = 1;
  int64_t w = 1;
  bool operator==(const pair2&) const = default;
};

// One layer of a feed-forward chain. Only the fields relevant to `kind` are
// meaningful. Biases do not exist in this network family; a config that asks
// for one is rejected at parse time rather than silently ignored.
struct layer_spec {
  layer_kind kind = layer_kind::relu;
  int64_t out_channels = 0;   // conv
  int64_t out_features = 0;   // linear
  pair2 kernel{1, 1};         // conv, avgpool
  pair2 stride{1, 1};         // conv, avgpool
  pair2 padding{0, 0};        // conv
  double dropout_p = 0.0;     // dropout

  bool is_weighted() const {
    return kind == layer_kind::conv2d || kind == layer_kind::linear;
  }
  bool is_activation() const {
    return kind == layer_kind::relu || kind == layer_kind::qrelu;
  }
};

// Declarative description of a network, shared by the analog trainer and the
// spiking simulator.
struct network_spec {
  std::vector<int64_t> input_shape;  // [C, H, W]
  std::vector<layer_spec> layers;
  output_activation_kind output_activation = output_activation_kind::none;

  std::vector<size_t> weighted_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < layers.size(); ++i)
      if (layers[i].is_weighted()) out.push_back(i);
    return out;
  }

  std::vector<size_t> activation_indices() const {
    std::vector<size_t> out;
    for (size_t i = 0; i < layers.size(); ++i)
      if (layers[i].is_activation()) out.push_back(i);
    return out;
  }

  // Shape flowing out of layer i (input_shape for i == -1). Linear layers
  // implicitly flatten [C,H,W] inputs.
  std::vector<int64_t> shape_after(int64_t upto) const {
    std::vector<int64_t> s = input_shape;
    for (int64_t i = 0; i <= upto; ++i) {
      const layer_spec& l = layers[static_cast<size_t>(i)];
      switch (l.kind) {
        case layer_kind::conv2d: {
          if (s.size() != 3)
            throw config_error("conv layer " + std::to_string(i) +
                               " needs a [C,H,W] input, got rank " +
                               std::to_string(s.size()));
          const int64_t h = (s[1] + 2 * l.padding.h - l.kernel.h) / l.stride.h + 1;
          const int64_t w = (s[2] + 2 * l.padding.w - l.kernel.w) / l.stride.w + 1;
          if (l.kernel.h > s[1] + 2 * l.padding.h || l.kernel.w > s[2] + 2 * l.padding.w)
            throw config_error("conv kernel exceeds padded input at layer " +
                               std::to_string(i));
          s = {l.out_channels, h, w};
          break;
        }
        case layer_kind::avgpool2d: {
          if (s.size() != 3)
            throw config_error("avgpool layer " + std::to_string(i) +
                               " needs a [C,H,W] input");
          if (l.kernel.h > s[1] || l.kernel.w > s[2])
            throw config_error("avgpool window exceeds input at layer " +
                               std::to_string(i));
          const int64_t h = (s[1] - l.kernel.h) / l.stride.h + 1;
          const int64_t w = (s[2] - l.kernel.w) / l.stride.w + 1;
          s = {s[0], h, w};
          break;
        }
        case layer_kind::linear: {
          int64_t d = 1;
          for (int64_t e : s) d *= e;
          s = {l.out_features};
          (void)d;
          break;
        }
        default:
          break;  // activations and dropout preserve shape
      }
    }
    return s;
  }

  std::vector<int64_t> output_shape() const {
    return shape_after(static_cast<int64_t>(layers.size()) - 1);
  }

  // Parameter tensor shape for weighted layer at `index`.
  std::vector<int64_t> weight_shape(size_t index) const {
    const layer_spec& l = layers.at(index);
    std::vector<int64_t> in = shape_after(static_cast<int64_t>(index) - 1);
    if (l.kind == layer_kind::conv2d) {
      return {l.out_channels, in[0], l.kernel.h, l.kernel.w};
    }
    if (l.kind == layer_kind::linear) {
      int64_t d = 1;
      for (int64_t e : in) d *= e;
      return {l.out_features, d};
    }
    throw config_error("layer " + std::to_string(index) + " has no weights");
  }

  size_t num_classes() const {
    std::vector<int64_t> out = output_shape();
    if (out.size() != 1)
      throw config_error("network output is not a class vector");
    return static_cast<size_t>(out[0]);
  }

  // Copy with every relu turned into qrelu (and output activation likewise).
  network_spec quantized() const {
    network_spec q = *this;
    for (layer_spec& l : q.layers)
      if (l.kind == layer_kind::relu) l.kind = layer_kind::qrelu;
    if (q.output_activation == output_activation_kind::relu)
      q.output_activation = output_activation_kind::qrelu;
    return q;
  }

  bool is_quantized() const {
    for (const layer_spec& l : layers)
      if (l.kind == layer_kind::qrelu) return true;
    return output_activation == output_activation_kind::qrelu;
  }

  void validate() const {
    if (input_shape.size() != 3)
      throw config_error("input shape must be [C,H,W]");
    for (int64_t e : input_shape)
      if (e <= 0) throw config_error("input extents must be positive");
    if (layers.empty()) throw config_error("network has no layers");
    if (!layers.back().is_weighted() && !layers.back().is_activation())
      throw config_error("network must end in a weighted or activation layer");
    if (output_activation != output_activation_kind::none && layers.back().is_activation())
      throw config_error("output activation would stack on a trailing activation layer");

    bool weighted_since_activation = false;  // activations must follow weights
    for (size_t i = 0; i < layers.size(); ++i) {
      const layer_spec& l = layers[i];
      switch (l.kind) {
        case layer_kind::conv2d:
          if (l.out_channels <= 0)
            throw config_error("conv out_channels must be positive");
          if (l.kernel.h <= 0 || l.kernel.w <= 0 || l.stride.h <= 0 || l.stride.w <= 0)
            throw config_error("conv kernel/stride must be positive");
          if (l.padding.h < 0 || l.padding.w < 0)
            throw config_error("conv padding must be non-negative");
          weighted_since_activation = true;
          break;
        case layer_kind::linear:
          if (l.out_features <= 0)
            throw config_error("linear out_features must be positive");
          weighted_since_activation = true;
          break;
        case layer_kind::avgpool2d:
          if (l.kernel.h <= 0 || l.kernel.w <= 0 || l.stride.h <= 0 || l.stride.w <= 0)
            throw config_error("avgpool kernel/stride must be positive");
          break;
        case layer_kind::relu:
        case layer_kind::qrelu:
          if (!weighted_since_activation)
            throw config_error(
                "activation layers must be separated by a weighted layer (layer " +
                std::to_string(i) + ")");
          weighted_since_activation = false;
          break;
        case layer_kind::dropout:
          if (l.dropout_p < 0.0 || l.dropout_p >= 1.0)
            throw config_error("dropout p must be in [0,1)");
          break;
      }
    }
    // every extent must come out positive
    std::vector<int64_t> out = output_shape();
    for (int64_t e : out)
      if (e <= 0) throw config_error("network collapses to a non-positive extent");
    std::vector<int64_t> probe = input_shape;
    for (size_t i = 0; i < layers.size(); ++i) {
      probe = shape_after(static_cast<int64_t>(i));
      for (int64_t e : probe)
        if (e <= 0)
          throw config_error("layer " + std::to_string(i) +
                             " produces a non-positive extent");
    }
  }
};

// ---- JSON (de)serialization ----------------------------------------------

namespace detail {

inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) {
      if (it.key() == "bias")
        throw config_error(where + ": bias parameters are not supported");
      throw config_error(where + ": unknown key '" + it.key() + "'");
    }
  }
}

inline pair2 parse_pair(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_integer()) {
    int64_t v = j.get<int64_t>();
    return {v, v};
  }
  if (j.is_array() && j.size() == 2)
    return {j[0].get<int64_t>(), j[1].get<int64_t>()};
  throw config_error(where + ": expected integer or [h,w] pair");
}

}  // namespace detail

inline nlohmann::json to_json(const pair2& p) { return nlohmann::json{p.h, p.w}; }

inline nlohmann::json to_json(const layer_spec& l) {
  nlohmann::json j;
  j["kind"] = to_string(l.kind);
  switch (l.kind) {
    case layer_kind::conv2d:
      j["out_channels"] = l.out_channels;
      j["kernel"] = to_json(l.kernel);
      j["stride"] = to_json(l.stride);
      j["padding"] = to_json(l.padding);
      break;
    case layer_kind::avgpool2d:
      j["kernel"] = to_json(l.kernel);
      j["stride"] = to_json(l.stride);
      break;
    case layer_kind::linear:
      j["out_features"] = l.out_features;
      break;
    case layer_kind::dropout:
      j["p"] = l.dropout_p;
      break;
    default:
      break;
  }
  return j;
}

inline layer_spec layer_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind"))
    throw config_error(where + ": layer must be an object with a 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  layer_spec l;
  if (kind == "conv") {
    detail::require_keys(j, {"kind", "out_channels", "kernel", "stride", "padding"}, where);
    l.kind = layer_kind::conv2d;
    l.out_channels = j.at("out_channels").get<int64_t>();
    l.kernel = detail::parse_pair(j.at("kernel"), where + ".kernel");
    l.stride = j.contains("stride") ? detail::parse_pair(j.at("stride"), where + ".stride")
                                    : pair2{1, 1};
    l.padding = j.contains("padding")
                    ? detail::parse_pair(j.at("padding"), where + ".padding")
                    : pair2{0, 0};
  } else if (kind == "avgpool") {
    detail::require_keys(j, {"kind", "kernel", "stride"}, where);
    l.kind = layer_kind::avgpool2d;
    l.kernel = detail::parse_pair(j.at("kernel"), where + ".kernel");
    l.stride = j.contains("stride") ? detail::parse_pair(j.at("stride"), where + ".stride")
                                    : l.kernel;
  } else if (kind == "linear") {
    detail::require_keys(j, {"kind", "out_features"}, where);
    l.kind = layer_kind::linear;
    l.out_features = j.at("out_features").get<int64_t>();
  } else if (kind == "relu") {
    detail::require_keys(j, {"kind"}, where);
    l.kind = layer_kind::relu;
  } else if (kind == "qrelu") {
    detail::require_keys(j, {"kind"}, where);
    l.kind = layer_kind::qrelu;
  } else if (kind == "dropout") {
    detail::require_keys(j, {"kind", "p"}, where);
    l.kind = layer_kind::dropout;
    l.dropout_p = j.at("p").get<double>();
  } else {
    throw config_error(where + ": unknown layer kind '" + kind + "'");
  }
  return l;
}

inline nlohmann::json to_json(const network_spec& s) {
  nlohmann::json j;
  j["input"] = s.input_shape;
  j["layers"] = nlohmann::json::array();
  for (const layer_spec& l : s.layers) j["layers"].push_back(to_json(l));
  switch (s.output_activation) {
    case output_activation_kind::none: j["output_activation"] = "none"; break;
    case output_activation_kind::relu: j["output_activation"] = "relu"; break;
    case output_activation_kind::qrelu: j["output_activation"] = "qrelu"; break;
  }
  return j;
}

inline network_spec network_from_json(const nlohmann::json& j) {
  detail::require_keys(j, {"input", "layers", "output_activation"}, "network");
  network_spec s;
  if (!j.contains("input") || !j.contains("layers"))
    throw config_error("network: 'input' and 'layers' are required");
  s.input_shape = j.at("input").get<std::vector<int64_t>>();
  size_t i = 0;
  for (const auto& lj : j.at("layers"))
    s.layers.push_back(layer_from_json(lj, "network.layers[" + std::to_string(i++) + "]"));
  if (j.contains("output_activation")) {
    const std::string oa = j.at("output_activation").get<std::string>();
    if (oa == "none") s.output_activation = output_activation_kind::none;
    else if (oa == "relu") s.output_activation = output_activation_kind::relu;
    else if (oa == "qrelu") s.output_activation = output_activation_kind::qrelu;
    else throw config_error("network.output_activation: unknown value '" + oa + "'");
  }
  s.validate();
  return s;
}

}  // namespace synoptic
