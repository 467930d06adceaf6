#pragma once

#include <stdexcept>
#include <string>

namespace msaff {

// Shape/axis violations between tensors or against an op contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (presets, divisibility, ranges).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf produced or consumed where finiteness is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse (e.g. backward through a non-scalar).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset/file problems: parse failures, frame misalignment, bad splits.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msaff
