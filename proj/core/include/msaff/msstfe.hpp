#pragma once

#include <string>

#include "msaff/config.hpp"
#include "msaff/params.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

// One MSSTFE instance over M parts. The three pipeline instances (img, ske,
// fused) live under distinct prefixes and share nothing.
void init_msstfe(ParameterStore& store, const std::string& prefix, int channels, int parts,
                 std::mt19937_64& rng);

// Spatial conv over the part axis followed by M unshared temporal convs
// (kernel 3) over the frame axis; same-length everywhere. `spatial` and
// `temporal` name the parameter groups, e.g. "<prefix>.part.s1" and
// "<prefix>.part.t1".
Tensor msstfe_st_stage(const Tensor& p, const ParameterStore& store,
                       const std::string& spatial, const std::string& temporal,
                       const ModelConfig& cfg);

Tensor msstfe_branch_part(const Tensor& p, const ParameterStore& store,
                          const std::string& prefix, const ModelConfig& cfg);
Tensor msstfe_branch_local(const Tensor& p, const ParameterStore& store,
                           const std::string& prefix, const ModelConfig& cfg);
Tensor msstfe_branch_global(const Tensor& p, const ParameterStore& store,
                            const std::string& prefix, const ModelConfig& cfg);

// Full extractor: [N,C,M] -> [C,3M], scale blocks ordered (part, local,
// global), max-aggregated over the frame axis.
Tensor msstfe_extract(const Tensor& p, const ParameterStore& store,
                      const std::string& prefix, const ModelConfig& cfg);

}  // namespace msaff
