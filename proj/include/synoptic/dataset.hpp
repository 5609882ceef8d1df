#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synoptic/errors.hpp"
#include "synoptic/events.hpp"
#include "synoptic/tensor.hpp"
#include "synoptic/util.hpp"

namespace synoptic {

// ---- standalone tensor container ("SYNT"), used for image samples -----------

inline constexpr uint32_t tensor_format_version = 1;

inline void save_tensor(const Tensor& t, const std::string& path) {
  std::ostringstream body(std::ios::binary);
  body.write("SYNT", 4);
  write_le<uint32_t>(body, tensor_format_version);
  write_le<uint32_t>(body, static_cast<uint32_t>(t.rank()));
  for (int64_t e : t.shape) write_le<uint64_t>(body, static_cast<uint64_t>(e));
  for (float v : t.data) write_le<float>(body, v);
  const std::string bytes = body.str();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  write_le<uint32_t>(out, crc32(bytes));
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open tensor file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw io_error("tensor file '" + path + "' is truncated");
  const std::string payload = bytes.substr(0, bytes.size() - 4);
  std::istringstream crc_in(bytes.substr(bytes.size() - 4));
  if (crc32(payload) != read_le<uint32_t>(crc_in))
    throw io_error("tensor file '" + path + "' failed its checksum");
  std::istringstream is(payload, std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SYNT")
    throw io_error("'" + path + "' is not a tensor file (bad magic)");
  if (read_le<uint32_t>(is) != tensor_format_version)
    throw io_error("tensor file '" + path + "' has an unsupported version");
  const uint32_t rank = read_le<uint32_t>(is);
  std::vector<int64_t> shape(rank);
  for (uint32_t r = 0; r < rank; ++r)
    shape[r] = static_cast<int64_t>(read_le<uint64_t>(is));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = read_le<float>(is);
  return t;
}

// ---- dataset directory layout -------------------------------------------------
//
//   <root>/manifest.json
//   <root>/<class-id>/<sample>.bin     event slices (SYNE) or images (SYNT)
//
// The manifest pins the sensor size, class count, per-split sample lists and
// the generation seed; rebuilding from the same inputs writes identical bytes.

struct data_sample {
  std::string path;  // relative to the dataset root
  size_t label = 0;
  frame_pair frame;  // events + raw count frame (events empty for image data)
};

struct dataset {
  std::string kind;  // "events" or "images"
  uint16_t width = 0;
  uint16_t height = 0;
  size_t num_classes = 0;
  size_t event_count_per_frame = 0;
  std::vector<data_sample> train;
  std::vector<data_sample> test;
};

inline constexpr int dataset_schema_version = 1;

namespace detail {

inline nlohmann::json sample_list_json(const std::vector<std::pair<std::string, size_t>>& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [path, label] : v)
    arr.push_back({{"label", label}, {"path", path}});
  return arr;
}

}  // namespace detail

struct manifest_entry {
  std::string path;
  size_t label = 0;
};

struct dataset_manifest {
  std::string kind;
  uint16_t width = 0, height = 0;
  size_t num_classes = 0;
  size_t event_count_per_frame = 0;
  uint64_t seed = 0;
  double test_fraction = 0.2;
  std::vector<manifest_entry> train, test;
};

inline void write_manifest(const dataset_manifest& m, const std::string& root) {
  nlohmann::json j;
  j["schema_version"] = dataset_schema_version;
  j["kind"] = m.kind;
  j["sensor"] = {{"height", m.height}, {"width", m.width}};
  j["classes"] = m.num_classes;
  j["event_count_per_frame"] = m.event_count_per_frame;
  j["seed"] = m.seed;
  j["test_fraction"] = m.test_fraction;
  std::vector<std::pair<std::string, size_t>> tr, te;
  for (const auto& e : m.train) tr.emplace_back(e.path, e.label);
  for (const auto& e : m.test) te.emplace_back(e.path, e.label);
  j["train"] = detail::sample_list_json(tr);
  j["test"] = detail::sample_list_json(te);
  std::ofstream out(std::filesystem::path(root) / "manifest.json",
                    std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write manifest under '" + root + "'");
  out << j.dump(2) << "\n";
}

inline dataset_manifest read_manifest(const std::string& root) {
  const std::filesystem::path p = std::filesystem::path(root) / "manifest.json";
  std::ifstream in(p);
  if (!in) throw io_error("no manifest at '" + p.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed manifest '" + p.string() + "': " + e.what());
  }
  dataset_manifest m;
  try {
    if (j.at("schema_version").get<int>() != dataset_schema_version)
      throw io_error("unsupported manifest schema in '" + p.string() + "'");
    m.kind = j.at("kind").get<std::string>();
    m.height = j.at("sensor").at("height").get<uint16_t>();
    m.width = j.at("sensor").at("width").get<uint16_t>();
    m.num_classes = j.at("classes").get<size_t>();
    m.event_count_per_frame = j.at("event_count_per_frame").get<size_t>();
    m.seed = j.at("seed").get<uint64_t>();
    m.test_fraction = j.at("test_fraction").get<double>();
    for (const auto& e : j.at("train"))
      m.train.push_back({e.at("path").get<std::string>(), e.at("label").get<size_t>()});
    for (const auto& e : j.at("test"))
      m.test.push_back({e.at("path").get<std::string>(), e.at("label").get<size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw io_error("malformed manifest '" + p.string() + "': " + e.what());
  }
  return m;
}

// Builds the on-disk dataset from generated streams: one SYNE file per
// 3000-event frame, stratified 80/20 split, deterministic for a given seed.
inline dataset_manifest prepare_synthetic_dataset(
    const std::string& root, size_t classes, size_t streams_per_class,
    size_t events_per_stream, uint16_t width, uint16_t height, uint64_t seed,
    double test_fraction = 0.2, size_t frame_event_count = 3000) {
  namespace fs = std::filesystem;
  fs::create_directories(root);

  std::vector<manifest_entry> all;
  std::vector<size_t> labels;
  for (size_t c = 0; c < classes; ++c) {
    fs::create_directories(fs::path(root) / std::to_string(c));
    size_t frame_idx = 0;
    for (size_t s = 0; s < streams_per_class; ++s) {
      rng_stream key(seed, {0xDA7Aull, c, s});
      event_stream stream =
          synth_events(c, key.next_u64(), events_per_stream, width, height);
      for (frame_pair& fp : accumulate_frames(stream, frame_event_count)) {
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu.bin", frame_idx++);
        const std::string rel = std::to_string(c) + "/" + name;
        event_stream slice{width, height, fp.events};
        save_events(slice, (fs::path(root) / rel).string());
        all.push_back({rel, c});
        labels.push_back(c);
      }
    }
  }

  dataset_split split = split_dataset(labels, test_fraction, seed);
  dataset_manifest m;
  m.kind = "events";
  m.width = width;
  m.height = height;
  m.num_classes = classes;
  m.event_count_per_frame = frame_event_count;
  m.seed = seed;
  m.test_fraction = test_fraction;
  for (size_t i : split.train) m.train.push_back(all[i]);
  for (size_t i : split.test) m.test.push_back(all[i]);
  write_manifest(m, root);
  return m;
}

// Imports a directory tree of recorded event files (<class-id>/*.bin or *.csv)
// into the canonical per-frame layout.
inline dataset_manifest import_events_dataset(const std::string& input_dir,
                                              const std::string& root, uint64_t seed,
                                              double test_fraction = 0.2,
                                              size_t frame_event_count = 3000,
                                              uint16_t sensor_width = 0,
                                              uint16_t sensor_height = 0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(input_dir))
    throw io_error("input directory '" + input_dir + "' does not exist");

  std::vector<std::pair<size_t, fs::path>> inputs;
  for (const auto& class_dir : fs::directory_iterator(input_dir)) {
    if (!class_dir.is_directory()) continue;
    size_t label = 0;
    try {
      label = std::stoul(class_dir.path().filename().string());
    } catch (...) {
      throw io_error("class directory '" + class_dir.path().string() +
                     "' is not a numeric class id");
    }
    for (const auto& f : fs::directory_iterator(class_dir.path()))
      if (f.is_regular_file()) inputs.emplace_back(label, f.path());
  }
  std::sort(inputs.begin(), inputs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  if (inputs.empty()) throw io_error("no event files under '" + input_dir + "'");

  fs::create_directories(root);
  uint16_t width = sensor_width, height = sensor_height;
  std::vector<manifest_entry> all;
  std::vector<size_t> labels;
  std::vector<size_t> per_class_counter;
  size_t classes = 0;
  for (const auto& [label, path] : inputs) {
    event_stream stream;
    if (path.extension() == ".csv") {
      if (width == 0)
        throw io_error("CSV import needs --sensor WxH (or a preceding binary file) "
                       "to fix the sensor size for '" + path.string() + "'");
      stream = load_events_csv(path.string(), width, height);
    } else {
      stream = load_events(path.string());
    }
    if (width == 0) {
      width = stream.width;
      height = stream.height;
    } else if (stream.width != width || stream.height != height) {
      throw io_error("'" + path.string() + "' has sensor " +
                     std::to_string(stream.width) + "x" + std::to_string(stream.height) +
                     ", dataset is " + std::to_string(width) + "x" +
                     std::to_string(height));
    }
    classes = std::max(classes, label + 1);
    if (per_class_counter.size() < classes) per_class_counter.resize(classes, 0);
    fs::create_directories(fs::path(root) / std::to_string(label));
    for (frame_pair& fp : accumulate_frames(stream, frame_event_count)) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.bin", per_class_counter[label]++);
      const std::string rel = std::to_string(label) + "/" + name;
      save_events(event_stream{width, height, fp.events},
                  (fs::path(root) / rel).string());
      all.push_back({rel, label});
      labels.push_back(label);
    }
  }

  dataset_split split = split_dataset(labels, test_fraction, seed);
  dataset_manifest m;
  m.kind = "events";
  m.width = width;
  m.height = height;
  m.num_classes = classes;
  m.event_count_per_frame = frame_event_count;
  m.seed = seed;
  m.test_fraction = test_fraction;
  for (size_t i : split.train) m.train.push_back(all[i]);
  for (size_t i : split.test) m.test.push_back(all[i]);
  write_manifest(m, root);
  return m;
}

// Imports a directory tree of image tensors (<class-id>/*.bin, SYNT container)
// into the canonical layout for constant-current experiments.
inline dataset_manifest import_images_dataset(const std::string& input_dir,
                                              const std::string& root, uint64_t seed,
                                              double test_fraction = 0.2) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(input_dir))
    throw io_error("input directory '" + input_dir + "' does not exist");

  std::vector<std::pair<size_t, fs::path>> inputs;
  for (const auto& class_dir : fs::directory_iterator(input_dir)) {
    if (!class_dir.is_directory()) continue;
    size_t label = 0;
    try {
      label = std::stoul(class_dir.path().filename().string());
    } catch (...) {
      throw io_error("class directory '" + class_dir.path().string() +
                     "' is not a numeric class id");
    }
    for (const auto& f : fs::directory_iterator(class_dir.path()))
      if (f.is_regular_file()) inputs.emplace_back(label, f.path());
  }
  std::sort(inputs.begin(), inputs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  if (inputs.empty()) throw io_error("no image files under '" + input_dir + "'");

  fs::create_directories(root);
  int64_t height = 0, width = 0;
  size_t classes = 0;
  std::vector<manifest_entry> all;
  std::vector<size_t> labels;
  std::vector<size_t> per_class_counter;
  for (const auto& [label, path] : inputs) {
    Tensor img = load_tensor(path.string());
    if (img.rank() != 3)
      throw io_error("'" + path.string() + "': image tensors must be [C,H,W]");
    if (height == 0) {
      height = img.dim(1);
      width = img.dim(2);
    } else if (img.dim(1) != height || img.dim(2) != width) {
      throw io_error("'" + path.string() + "' image size disagrees with the dataset");
    }
    classes = std::max(classes, label + 1);
    if (per_class_counter.size() < classes) per_class_counter.resize(classes, 0);
    fs::create_directories(fs::path(root) / std::to_string(label));
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.bin", per_class_counter[label]++);
    const std::string rel = std::to_string(label) + "/" + name;
    save_tensor(img, (fs::path(root) / rel).string());
    all.push_back({rel, label});
    labels.push_back(label);
  }

  dataset_split split = split_dataset(labels, test_fraction, seed);
  dataset_manifest m;
  m.kind = "images";
  m.width = static_cast<uint16_t>(width);
  m.height = static_cast<uint16_t>(height);
  m.num_classes = classes;
  m.event_count_per_frame = 0;
  m.seed = seed;
  m.test_fraction = test_fraction;
  for (size_t i : split.train) m.train.push_back(all[i]);
  for (size_t i : split.test) m.test.push_back(all[i]);
  write_manifest(m, root);
  return m;
}

// Loads every sample into memory. Event samples get their collapsed count
// frame; image samples load the stored tensor directly.
inline dataset load_dataset(const std::string& root) {
  const dataset_manifest m = read_manifest(root);
  dataset ds;
  ds.kind = m.kind;
  ds.width = m.width;
  ds.height = m.height;
  ds.num_classes = m.num_classes;
  ds.event_count_per_frame = m.event_count_per_frame;

  auto load_split = [&](const std::vector<manifest_entry>& entries,
                        std::vector<data_sample>& out) {
    for (const manifest_entry& e : entries) {
      data_sample s;
      s.path = e.path;
      s.label = e.label;
      const std::string full = (std::filesystem::path(root) / e.path).string();
      if (m.kind == "events") {
        event_stream stream = load_events(full);
        if (stream.width != m.width || stream.height != m.height)
          throw io_error("'" + full + "' sensor size disagrees with the manifest");
        s.frame.events = stream.events;
        s.frame.frame = collapse_events(stream.events, stream.width, stream.height);
      } else if (m.kind == "images") {
        s.frame.frame = load_tensor(full);
      } else {
        throw io_error("unknown dataset kind '" + m.kind + "'");
      }
      s.frame.label = e.label;
      out.push_back(std::move(s));
    }
  };
  load_split(m.train, ds.train);
  load_split(m.test, ds.test);
  return ds;
}

}  // namespace synoptic
