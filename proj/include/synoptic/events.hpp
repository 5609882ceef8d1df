#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"
#include "synoptic/rng.hpp"
#include "synoptic/tensor.hpp"
#include "synoptic/util.hpp"

namespace synoptic {

// One DVS event. Timestamps are microseconds, non-decreasing within a stream.
// Polarity is carried through files but discarded by every consumer downstream.
struct event {
  uint64_t t_us = 0;
  uint16_t x = 0;
  uint16_t y = 0;
  uint8_t polarity = 0;

  bool operator==(const event&) const = default;
};

struct event_stream {
  uint16_t width = 0;
  uint16_t height = 0;
  std::vector<event> events;

  bool operator==(const event_stream&) const = default;

  uint64_t duration_us() const {
    return events.empty() ? 0 : events.back().t_us;
  }
};

// ---- binary event container ("SYNE") ----------------------------------------
//
//   "SYNE" | u32 version | u16 width | u16 height | u64 count
//   records, 16 bytes each: u64 t_us | u16 x | u16 y | u8 polarity | u8 pad
//
// Little-endian. Loading validates coordinate bounds and timestamp
// monotonicity; violations are reported with the offending record index.

inline constexpr uint32_t event_format_version = 1;

inline void save_events(const event_stream& stream, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write("SYNE", 4);
  write_le<uint32_t>(out, event_format_version);
  write_le<uint16_t>(out, stream.width);
  write_le<uint16_t>(out, stream.height);
  write_le<uint64_t>(out, stream.events.size());
  for (const event& e : stream.events) {
    write_le<uint64_t>(out, e.t_us);
    write_le<uint16_t>(out, e.x);
    write_le<uint16_t>(out, e.y);
    write_le<uint8_t>(out, e.polarity);
    write_le<uint8_t>(out, 0);
  }
  if (!out) throw io_error("write failed for '" + path + "'");
}

inline void validate_stream(const event_stream& s, const std::string& origin) {
  uint64_t prev_t = 0;
  for (size_t i = 0; i < s.events.size(); ++i) {
    const event& e = s.events[i];
    if (e.x >= s.width || e.y >= s.height)
      throw io_error(origin + ": record " + std::to_string(i) + " at (" +
                     std::to_string(e.x) + "," + std::to_string(e.y) +
                     ") is outside the " + std::to_string(s.width) + "x" +
                     std::to_string(s.height) + " sensor");
    if (e.polarity > 1)
      throw io_error(origin + ": record " + std::to_string(i) +
                     " has polarity " + std::to_string(e.polarity));
    if (i > 0 && e.t_us < prev_t)
      throw io_error(origin + ": record " + std::to_string(i) +
                     " breaks timestamp monotonicity (" + std::to_string(e.t_us) +
                     " after " + std::to_string(prev_t) + ")");
    prev_t = e.t_us;
  }
}

inline event_stream load_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open event file '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "SYNE")
    throw io_error("'" + path + "' is not an event file (bad magic)");
  const uint32_t version = read_le<uint32_t>(in);
  if (version != event_format_version)
    throw io_error("event file version " + std::to_string(version) +
                   " is not supported");
  event_stream s;
  s.width = read_le<uint16_t>(in);
  s.height = read_le<uint16_t>(in);
  const uint64_t count = read_le<uint64_t>(in);
  s.events.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    event e;
    try {
      e.t_us = read_le<uint64_t>(in);
      e.x = read_le<uint16_t>(in);
      e.y = read_le<uint16_t>(in);
      e.polarity = read_le<uint8_t>(in);
      (void)read_le<uint8_t>(in);
    } catch (const io_error&) {
      throw io_error("'" + path + "': truncated at record " + std::to_string(i) +
                     " of " + std::to_string(count));
    }
    s.events.push_back(e);
  }
  validate_stream(s, path);
  return s;
}

// CSV import: header "t,x,y,p", one event per row.
inline event_stream load_events_csv(const std::string& path, uint16_t width,
                                    uint16_t height) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open event file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw io_error("'" + path + "' is empty");
  // tolerate trailing \r and spaces in the header
  std::string header = line;
  header.erase(std::remove_if(header.begin(), header.end(),
                              [](char c) { return c == ' ' || c == '\r'; }),
               header.end());
  if (header != "t,x,y,p")
    throw io_error("'" + path + "': expected header 't,x,y,p', got '" + line + "'");
  event_stream s;
  s.width = width;
  s.height = height;
  size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream ls(line);
    event e;
    char c1, c2, c3;
    unsigned long long t;
    unsigned int x, y, p;
    if (!(ls >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' || c2 != ',' ||
        c3 != ',')
      throw io_error("'" + path + "': malformed row " + std::to_string(row));
    e.t_us = t;
    e.x = static_cast<uint16_t>(x);
    e.y = static_cast<uint16_t>(y);
    e.polarity = static_cast<uint8_t>(p);
    s.events.push_back(e);
  }
  validate_stream(s, path);
  return s;
}

// ---- frame accumulation ------------------------------------------------------

// A fixed-count slice of a stream and its time-collapsed frame. `frame` holds
// raw per-pixel event counts (they sum to exactly the slice length); the
// clamped 0..255 presentation used for training comes from training_image().
struct frame_pair {
  Tensor frame;               // [1, H, W] raw counts
  std::vector<event> events;  // the exact slice
  size_t label = 0;

  Tensor training_image(float clamp_at = 255.0f) const {
    Tensor img = frame;
    for (float& v : img.data) v = std::min(v, clamp_at);
    return img;
  }
};

inline Tensor collapse_events(const std::vector<event>& events, uint16_t width,
                              uint16_t height) {
  Tensor frame({1, static_cast<int64_t>(height), static_cast<int64_t>(width)});
  for (const event& e : events)
    frame.data[static_cast<size_t>(e.y) * width + e.x] += 1.0f;
  return frame;
}

// Consecutive non-overlapping slices of exactly `count` events; the trailing
// remainder is dropped. Polarity is ignored.
inline std::vector<frame_pair> accumulate_frames(const event_stream& stream,
                                                 size_t count = 3000) {
  if (count == 0) throw config_error("frame event count must be positive");
  std::vector<frame_pair> frames;
  const size_t n_full = stream.events.size() / count;
  frames.reserve(n_full);
  for (size_t f = 0; f < n_full; ++f) {
    frame_pair fp;
    fp.events.assign(stream.events.begin() + static_cast<std::ptrdiff_t>(f * count),
                     stream.events.begin() + static_cast<std::ptrdiff_t>((f + 1) * count));
    fp.frame = collapse_events(fp.events, stream.width, stream.height);
    frames.push_back(std::move(fp));
  }
  return frames;
}

// ---- synthetic generator ------------------------------------------------------

// Desk-scale stand-in for a DVS recording: an oriented bar that drifts on a
// small orbit around the sensor center, with gaussian spatial jitter and a
// fraction of uniform background noise events. The class id selects the bar
// orientation (22.5 degree steps), so separating classes takes genuine spatial
// discrimination rather than a single hot pixel. Event positions are clipped
// to a central box, which keeps activity away from the sensor border.
// Timestamps advance by a fixed 13 us per event, so a 3000-event
// stream replays in about 39 one-millisecond bins.
inline event_stream synth_events(size_t class_id, uint64_t seed, size_t n_events,
                                 uint16_t width = 16, uint16_t height = 16) {
  if (n_events == 0) throw config_error("synth_events: need at least one event");
  if (width < 8 || height < 8)
    throw config_error("synth_events: sensor must be at least 8x8");

  event_stream s;
  s.width = width;
  s.height = height;
  s.events.reserve(n_events);

  rng_stream rng(seed, {0x5E17ull, class_id});
  const double theta = 3.141592653589793 * static_cast<double>(class_id % 8) / 8.0;
  const double dir_x = std::cos(theta), dir_y = std::sin(theta);
  const double cx0 = (width - 1) / 2.0, cy0 = (height - 1) / 2.0;
  const double orbit = 1.6;
  const double half_len = 3.2;
  const double sigma = 0.6;
  const double noise_fraction = 0.06;
  const double phase0 = rng.uniform(0.0, 2.0 * 3.141592653589793);
  const uint64_t dt_us = 13;

  const double margin = 3.0;
  const double x_lo = margin, x_hi = width - 1 - margin;
  const double y_lo = margin, y_hi = height - 1 - margin;

  for (size_t i = 0; i < n_events; ++i) {
    const double phase =
        phase0 + 2.0 * 3.141592653589793 * static_cast<double>(i) /
                     static_cast<double>(n_events);
    double px, py;
    if (rng.uniform() < noise_fraction) {
      px = rng.uniform(x_lo, x_hi);
      py = rng.uniform(y_lo, y_hi);
    } else {
      const double cx = cx0 + orbit * std::cos(phase);
      const double cy = cy0 + orbit * std::sin(phase);
      const double u = rng.uniform(-half_len, half_len);
      px = std::clamp(cx + u * dir_x + sigma * rng.normal(), x_lo, x_hi);
      py = std::clamp(cy + u * dir_y + sigma * rng.normal(), y_lo, y_hi);
    }
    event e;
    e.t_us = dt_us * static_cast<uint64_t>(i);
    e.x = static_cast<uint16_t>(std::lround(px));
    e.y = static_cast<uint16_t>(std::lround(py));
    e.polarity = static_cast<uint8_t>(rng.next_u64() & 1ull);
    s.events.push_back(e);
  }
  return s;
}

// ---- splits and augmentation ---------------------------------------------------

struct dataset_split {
  std::vector<size_t> train;
  std::vector<size_t> test;
};

// Deterministic stratified split: per class, a seeded shuffle then the first
// round(fraction * n) items go to test.
inline dataset_split split_dataset(const std::vector<size_t>& labels,
                                   double test_fraction, uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0)
    throw config_error("test fraction must be in [0,1]");
  size_t n_classes = 0;
  for (size_t l : labels) n_classes = std::max(n_classes, l + 1);
  if (labels.size() < n_classes)
    throw config_error("fewer items than classes");
  std::vector<std::vector<size_t>> per_class(n_classes);
  for (size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);

  dataset_split split;
  for (size_t c = 0; c < n_classes; ++c) {
    std::vector<size_t>& items = per_class[c];
    rng_stream rng(seed, {0x51157ull, c});
    rng.shuffle(items);
    const size_t n_test = static_cast<size_t>(
        std::llround(test_fraction * static_cast<double>(items.size())));
    for (size_t i = 0; i < items.size(); ++i)
      (i < n_test ? split.test : split.train).push_back(items[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

struct augment_config {
  int64_t crop_padding = 0;      // pad then crop back to the original size
  double flip_probability = 0.5; // horizontal
  bool normalize = true;         // affine map of [0,255] to [-1,1]
  float pixel_max = 255.0f;
};

// Per-sample random crop + horizontal flip + [-1,1] normalization, matching
// the usual static-image training recipe.
inline Tensor augment_images(const Tensor& batch, const augment_config& cfg,
                             rng_stream rng) {
  if (batch.rank() != 4) throw shape_error("augment_images: batch must be [N,C,H,W]");
  const int64_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor out(batch.shape);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t off_y =
        cfg.crop_padding > 0
            ? static_cast<int64_t>(rng.uniform_index(2 * cfg.crop_padding + 1)) -
                  cfg.crop_padding
            : 0;
    const int64_t off_x =
        cfg.crop_padding > 0
            ? static_cast<int64_t>(rng.uniform_index(2 * cfg.crop_padding + 1)) -
                  cfg.crop_padding
            : 0;
    const bool flip = rng.uniform() < cfg.flip_probability;
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const int64_t sx = flip ? w - 1 - x : x;
          const int64_t src_y = y + off_y;
          const int64_t src_x = sx + off_x;
          float v = 0.0f;
          if (src_y >= 0 && src_y < h && src_x >= 0 && src_x < w)
            v = batch.at(i, ch, src_y, src_x);
          if (cfg.normalize) v = 2.0f * v / cfg.pixel_max - 1.0f;
          out.at(i, ch, y, x) = v;
        }
      }
    }
  }
  return out;
}

}  // namespace synoptic
