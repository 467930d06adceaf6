#pragma once

#include <string>

#include "msaff/config.hpp"
#include "msaff/encoders.hpp"
#include "msaff/params.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

// One AFFM instance. Frame-level and spatial-temporal-level instances are
// registered under distinct prefixes and share nothing.
void init_affm(ParameterStore& store, const std::string& prefix, int channels,
               int heads, int r, std::mt19937_64& rng);

// Cross-modal fusion of one silhouette-side feature [D,MI] with one
// skeleton-side feature [D,MS]. Attention distributes each silhouette part's
// weight across skeleton parts (softmax over the MS axis).
Tensor affm_fuse(const Tensor& a_img, const Tensor& a_ske, const ParameterStore& store,
                 const std::string& prefix, int heads, int r);

// Frame-by-frame fusion with shared frame-level parameters.
PartFeatureSequence affm_fuse_frames(const PartFeatureSequence& img,
                                     const PartFeatureSequence& ske,
                                     const ParameterStore& store, const std::string& prefix,
                                     int heads, int r);

}  // namespace msaff
