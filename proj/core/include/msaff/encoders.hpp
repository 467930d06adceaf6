#pragma once

#include <string>
#include <utility>
#include <vector>

#include "msaff/config.hpp"
#include "msaff/params.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

struct SilhouetteSequence {
  Tensor frames;  // [N,H,W], values in [0,1]
  std::string subject;
  std::string view;
  std::string condition;
};

struct SkeletonSequence {
  Tensor joints;  // [N,3,Z]: x, y, confidence per joint
  std::string subject;
  std::string view;
  std::string condition;
};

enum class PartKind { SilhouetteStrip, CocoJoint, Fused };

struct PartFeatureSequence {
  Tensor values;  // [N,C,M]
  PartKind kind = PartKind::SilhouetteStrip;
};

// COCO-17 skeleton edges (0-indexed joint pairs).
const std::vector<std::pair<int, int>>& coco17_edges();
// Adjacency with self-loops, row-normalized: every row sums to 1.
Tensor coco17_adjacency();

void init_silhouette_encoder(ParameterStore& store, const ModelConfig& cfg,
                             std::mt19937_64& rng);
void init_skeleton_encoder(ParameterStore& store, const ModelConfig& cfg,
                           std::mt19937_64& rng);

// Frame-level CNN: [N,H,W] silhouettes -> [N,C,H/2,W/2] feature maps.
// Strictly per-frame (frames are batch entries).
Tensor encode_silhouettes(const SilhouetteSequence& x, const ParameterStore& store,
                          const ModelConfig& cfg);

// Horizontal strips, GAP + GMP per strip: [N,C,H2,W2] -> [N,C,K].
PartFeatureSequence part_pool(const Tensor& feature_map, int K);

// Graph-attention encoder over COCO joints: [N,3,Z] -> [N,C,Z], joint order
// preserved.
PartFeatureSequence encode_skeletons(const SkeletonSequence& x, const ParameterStore& store,
                                     const ModelConfig& cfg);

}  // namespace msaff
