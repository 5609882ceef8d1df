#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "synoptic/errors.hpp"

namespace synoptic {

// ---- little-endian binary IO --------------------------------------------
// All file formats in this project are little-endian regardless of host.

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (sizeof(T) > 1) {
    uint16_t probe = 1;
    unsigned char lo;
    std::memcpy(&lo, &probe, 1);
    if (lo == 0) {  // big-endian host
      for (size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!is) throw io_error("unexpected end of file");
  if constexpr (sizeof(T) > 1) {
    uint16_t probe = 1;
    unsigned char lo;
    std::memcpy(&lo, &probe, 1);
    if (lo == 0) {
      for (size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

// ---- CRC32 (IEEE 802.3, same polynomial as zlib) -------------------------

class crc32_accumulator {
 public:
  crc32_accumulator() : state_(0xFFFFFFFFu) {}

  void update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint32_t c = state_;
    for (size_t i = 0; i < n; ++i) {
      c = table()[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    }
    state_ = c;
  }

  uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

 private:
  static const std::array<uint32_t, 256>& table() {
    static const std::array<uint32_t, 256> t = [] {
      std::array<uint32_t, 256> out{};
      for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k)
          c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        out[i] = c;
      }
      return out;
    }();
    return t;
  }

  uint32_t state_;
};

inline uint32_t crc32(const void* data, size_t n) {
  crc32_accumulator acc;
  acc.update(data, n);
  return acc.value();
}

inline uint32_t crc32(const std::string& s) { return crc32(s.data(), s.size()); }

inline uint32_t crc32(const std::vector<unsigned char>& v) {
  return crc32(v.data(), v.size());
}

}  // namespace synoptic
