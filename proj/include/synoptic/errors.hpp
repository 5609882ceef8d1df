#pragma once

#include <stdexcept>
#include <string>

namespace synoptic {

// Base class for all library errors.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer dimension mismatches.
class shape_error : public error {
 public:
  explicit shape_error(const std::string& msg) : error(msg) {}
};

// Invalid network specs, loss configs, CLI overrides, unknown keys.
class config_error : public error {
 public:
  explicit config_error(const std::string& msg) : error(msg) {}
};

// File format violations, checksum failures, unreadable paths.
class io_error : public error {
 public:
  explicit io_error(const std::string& msg) : error(msg) {}
};

}  // namespace synoptic
