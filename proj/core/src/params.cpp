#include "msaff/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace msaff {

namespace {

void put_f64_le(std::string& out, double v) {
  auto bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const char* p) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

void ParameterStore::set(const std::string& name, Tensor value) {
  if (!value.defined()) throw UsageError("ParameterStore::set: undefined tensor for " + name);
  params_[name] = std::move(value);
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter: " + name);
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

int64_t ParameterStore::scalar_count() const {
  int64_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterStore::save(const std::filesystem::path& file) const {
  nlohmann::json header;
  header["format"] = "msaff-checkpoint";
  header["version"] = 1;
  header["dtype"] = "f64le";
  nlohmann::json entries = nlohmann::json::object();
  int64_t offset = 0;
  for (const auto& [name, t] : params_) {
    entries[name] = {{"shape", t.shape()}, {"offset", offset}};
    offset += t.size() * 8;
  }
  header["params"] = entries;

  std::string blob = header.dump();
  blob.push_back('\n');
  for (const auto& [_, t] : params_) {
    for (double v : t.data()) put_f64_le(blob, v);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + file.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("short write to checkpoint: " + file.string());
}

ParameterStore ParameterStore::load(const std::filesystem::path& file, bool requires_grad) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + file.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto nl = blob.find('\n');
  if (nl == std::string::npos) {
    throw DataError("checkpoint missing header terminator: " + file.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header parse error in " + file.string() + ": " + e.what());
  }
  if (header.value("format", "") != "msaff-checkpoint") {
    throw DataError("not a checkpoint file: " + file.string());
  }
  const char* data = blob.data() + nl + 1;
  const int64_t data_bytes = static_cast<int64_t>(blob.size() - nl - 1);

  ParameterStore store;
  for (const auto& [name, entry] : header.at("params").items()) {
    Shape shape = entry.at("shape").get<Shape>();
    const int64_t offset = entry.at("offset").get<int64_t>();
    const int64_t count = numel(shape);
    if (offset < 0 || offset + count * 8 > data_bytes) {
      throw DataError("checkpoint data truncated for parameter " + name + " in " + file.string());
    }
    std::vector<double> values(static_cast<std::size_t>(count));
    for (int64_t i = 0; i < count; ++i) values[static_cast<std::size_t>(i)] = get_f64_le(data + offset + i * 8);
    store.set(name, Tensor::from_data(std::move(shape), std::move(values), requires_grad));
  }
  return store;
}

Tensor he_init(Shape shape, int fan_in, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  return Tensor::randn(std::move(shape), rng, stddev, true);
}

}  // namespace msaff
