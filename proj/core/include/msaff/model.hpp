#pragma once

#include <string>

#include "msaff/affm.hpp"
#include "msaff/config.hpp"
#include "msaff/encoders.hpp"
#include "msaff/msstfe.hpp"
#include "msaff/params.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

enum class PoolMode {
  Average,
  Max,
  Min,
  Median,
  AverageMax,
  AverageMin,
  AverageMedian,
};

PoolMode pool_mode_from_string(const std::string& name);
std::string pool_mode_name(PoolMode mode);
const std::vector<PoolMode>& all_pool_modes();

struct GaitEmbedding {
  Tensor values;  // [9K+3Z, out_c] in training, [9K+3Z, op] after FD pooling
  std::string subject;
  std::string view;
  std::string condition;
};

// Full network: dual encoders, three fusion stages, separate per-part FC
// head. Pure function of the inputs given a read-only parameter store.
class MsaffModel {
 public:
  explicit MsaffModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  void init_params(ParameterStore& store) const;  // seeded from cfg.seed
  void init_params(ParameterStore& store, std::mt19937_64& rng) const;
  // Shape compatibility between a loaded checkpoint and this config.
  void check_params(const ParameterStore& store) const;

  GaitEmbedding forward(const SilhouetteSequence& sil, const SkeletonSequence& ske,
                        const ParameterStore& store) const;

 private:
  ModelConfig cfg_;
};

// Channel-group pooling: [P,out_c] -> [P,op]. Average with op == out_c is
// the identity, bit-exact.
GaitEmbedding fd_pool(const GaitEmbedding& embedding, int op, PoolMode mode);

// Mean over parts of the per-part Euclidean distance.
double inference_distance(const GaitEmbedding& a, const GaitEmbedding& b);

}  // namespace msaff
