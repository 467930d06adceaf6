#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "msaff/tensor.hpp"

namespace msaff {

// Named parameter tensors. Iteration order is the lexicographic name order,
// which keeps optimizer updates and checkpoints deterministic.
class ParameterStore {
 public:
  void set(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::vector<std::string> names() const;
  int64_t scalar_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Checkpoint file: one-line JSON header (name -> shape, byte offset into
  // the data section) terminated by '\n', then raw little-endian float64.
  void save(const std::filesystem::path& file) const;
  static ParameterStore load(const std::filesystem::path& file, bool requires_grad);

 private:
  std::map<std::string, Tensor> params_;
};

// He-style normal init, stddev sqrt(2 / fan_in).
Tensor he_init(Shape shape, int fan_in, std::mt19937_64& rng);

}  // namespace msaff
