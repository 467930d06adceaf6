#include "msaff/model.hpp"

#include <algorithm>
#include <cmath>

#include "msaff/ops.hpp"

namespace msaff {

PoolMode pool_mode_from_string(const std::string& name) {
  if (name == "average") return PoolMode::Average;
  if (name == "max") return PoolMode::Max;
  if (name == "min") return PoolMode::Min;
  if (name == "median") return PoolMode::Median;
  if (name == "average+max") return PoolMode::AverageMax;
  if (name == "average+min") return PoolMode::AverageMin;
  if (name == "average+median") return PoolMode::AverageMedian;
  throw ConfigError("unknown pooling mode: " + name);
}

std::string pool_mode_name(PoolMode mode) {
  switch (mode) {
    case PoolMode::Average: return "average";
    case PoolMode::Max: return "max";
    case PoolMode::Min: return "min";
    case PoolMode::Median: return "median";
    case PoolMode::AverageMax: return "average+max";
    case PoolMode::AverageMin: return "average+min";
    case PoolMode::AverageMedian: return "average+median";
  }
  throw ConfigError("invalid pooling mode");
}

const std::vector<PoolMode>& all_pool_modes() {
  static const std::vector<PoolMode> modes = {
      PoolMode::Average,    PoolMode::Max,        PoolMode::Min,
      PoolMode::Median,     PoolMode::AverageMax, PoolMode::AverageMin,
      PoolMode::AverageMedian};
  return modes;
}

MsaffModel::MsaffModel(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

namespace {

struct HeadBlock {
  const char* tag;
  int parts;
};

std::vector<HeadBlock> head_blocks(const ModelConfig& cfg) {
  return {{"img", 3 * cfg.K}, {"ske", 3 * cfg.Z}, {"fs", 3 * cfg.K}, {"fst", 3 * cfg.K}};
}

}  // namespace

void MsaffModel::init_params(ParameterStore& store, std::mt19937_64& rng) const {
  init_silhouette_encoder(store, cfg_, rng);
  init_skeleton_encoder(store, cfg_, rng);
  init_msstfe(store, "msstfe_img", cfg_.C, cfg_.K, rng);
  init_msstfe(store, "msstfe_ske", cfg_.C, cfg_.Z, rng);
  init_msstfe(store, "msstfe_fs", cfg_.C, cfg_.K, rng);
  init_affm(store, "affm_frame", cfg_.C, cfg_.h, cfg_.r, rng);
  init_affm(store, "affm_st", cfg_.C, cfg_.h, cfg_.r, rng);
  for (const auto& blk : head_blocks(cfg_)) {
    for (int j = 0; j < blk.parts; ++j) {
      store.set("head." + std::string(blk.tag) + "." + std::to_string(j) + ".w",
                he_init({cfg_.out_c, cfg_.C}, cfg_.C, rng));
    }
  }
}

void MsaffModel::init_params(ParameterStore& store) const {
  std::mt19937_64 rng(cfg_.seed);
  init_params(store, rng);
}

void MsaffModel::check_params(const ParameterStore& store) const {
  ParameterStore expected;
  std::mt19937_64 rng(0);
  init_params(expected, rng);
  for (const auto& [name, t] : expected) {
    if (!store.contains(name)) {
      throw ConfigError("checkpoint is missing parameter " + name);
    }
    if (store.at(name).shape() != t.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " +
                        shape_str(store.at(name).shape()) + ", config expects " +
                        shape_str(t.shape()));
    }
  }
  if (store.size() != expected.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(store.size()) +
                      " parameters, config expects " + std::to_string(expected.size()));
  }
}

GaitEmbedding MsaffModel::forward(const SilhouetteSequence& sil, const SkeletonSequence& ske,
                                  const ParameterStore& store) const {
  if (!sil.frames.defined() || !ske.joints.defined() ||
      sil.frames.shape()[0] != ske.joints.shape()[0]) {
    throw DataError("silhouette and skeleton sequences must be frame-aligned");
  }

  Tensor smap = encode_silhouettes(sil, store, cfg_);
  PartFeatureSequence p_img = part_pool(smap, cfg_.K);
  PartFeatureSequence p_ske = encode_skeletons(ske, store, cfg_);
  if (cfg_.mask_branch == "silhouette") {
    p_img.values = mul_scalar(p_img.values, 0.0);
  } else if (cfg_.mask_branch == "skeleton") {
    p_ske.values = mul_scalar(p_ske.values, 0.0);
  }

  Tensor st_img = msstfe_extract(p_img.values, store, "msstfe_img", cfg_);
  Tensor st_ske = msstfe_extract(p_ske.values, store, "msstfe_ske", cfg_);

  PartFeatureSequence p_fs =
      affm_fuse_frames(p_img, p_ske, store, "affm_frame", cfg_.h, cfg_.r);
  Tensor st_fs = msstfe_extract(p_fs.values, store, "msstfe_fs", cfg_);

  Tensor st_fst = affm_fuse(st_img, st_ske, store, "affm_st", cfg_.h, cfg_.r);

  const Tensor* blocks[] = {&st_img, &st_ske, &st_fs, &st_fst};
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(cfg_.part_count()));
  int b = 0;
  for (const auto& blk : head_blocks(cfg_)) {
    const Tensor& feat = *blocks[b++];
    for (int j = 0; j < blk.parts; ++j) {
      const Tensor& w =
          store.at("head." + std::string(blk.tag) + "." + std::to_string(j) + ".w");
      Tensor col = slice(feat, 1, j, 1);            // [C,1]
      rows.push_back(transpose(matmul(w, col)));    // [1,out_c]
    }
  }
  GaitEmbedding out;
  out.values = concat(rows, 0);  // [9K+3Z, out_c]
  out.subject = sil.subject;
  out.view = sil.view;
  out.condition = sil.condition;
  return out;
}

GaitEmbedding fd_pool(const GaitEmbedding& embedding, int op, PoolMode mode) {
  const Tensor& values = embedding.values;
  if (!values.defined() || values.dim() != 2) {
    throw ShapeError("fd_pool: expects [P,out_c] embedding values");
  }
  const int parts = values.shape()[0];
  const int width = values.shape()[1];
  if (op <= 0 || width % op != 0) {
    throw ConfigError("fd_pool: op=" + std::to_string(op) + " does not divide channel width " +
                      std::to_string(width));
  }
  const int group = width / op;
  const auto& src = values.data();
  std::vector<double> out(static_cast<std::size_t>(parts) * op);
  std::vector<double> buf(static_cast<std::size_t>(group));

  auto reduce = [&](const double* g, PoolMode m) -> double {
    switch (m) {
      case PoolMode::Average: {
        double s = 0.0;
        for (int i = 0; i < group; ++i) s += g[i];
        return s / group;
      }
      case PoolMode::Max: return *std::max_element(g, g + group);
      case PoolMode::Min: return *std::min_element(g, g + group);
      case PoolMode::Median: {
        std::copy(g, g + group, buf.begin());
        std::sort(buf.begin(), buf.begin() + group);
        return group % 2 ? buf[static_cast<std::size_t>(group / 2)]
                         : 0.5 * (buf[static_cast<std::size_t>(group / 2 - 1)] +
                                  buf[static_cast<std::size_t>(group / 2)]);
      }
      default: break;
    }
    throw ConfigError("fd_pool: non-primitive mode in reduce");
  };

  for (int p = 0; p < parts; ++p) {
    const double* row = src.data() + static_cast<int64_t>(p) * width;
    for (int k = 0; k < op; ++k) {
      const double* g = row + static_cast<int64_t>(k) * group;
      double v = 0.0;
      switch (mode) {
        case PoolMode::Average:
        case PoolMode::Max:
        case PoolMode::Min:
        case PoolMode::Median:
          v = reduce(g, mode);
          break;
        case PoolMode::AverageMax:
          v = 0.5 * (reduce(g, PoolMode::Average) + reduce(g, PoolMode::Max));
          break;
        case PoolMode::AverageMin:
          v = 0.5 * (reduce(g, PoolMode::Average) + reduce(g, PoolMode::Min));
          break;
        case PoolMode::AverageMedian:
          v = 0.5 * (reduce(g, PoolMode::Average) + reduce(g, PoolMode::Median));
          break;
      }
      out[static_cast<std::size_t>(p) * op + k] = v;
    }
  }
  GaitEmbedding pooled = embedding;
  pooled.values = Tensor::from_data({parts, op}, std::move(out));
  return pooled;
}

double inference_distance(const GaitEmbedding& a, const GaitEmbedding& b) {
  if (!a.values.defined() || !b.values.defined() || a.values.shape() != b.values.shape()) {
    throw ShapeError("inference_distance: embeddings must share a shape");
  }
  const int parts = a.values.shape()[0];
  const int dim = a.values.shape()[1];
  const auto& av = a.values.data();
  const auto& bv = b.values.data();
  double total = 0.0;
  for (int p = 0; p < parts; ++p) {
    double sq = 0.0;
    const double* ra = av.data() + static_cast<int64_t>(p) * dim;
    const double* rb = bv.data() + static_cast<int64_t>(p) * dim;
    for (int i = 0; i < dim; ++i) {
      const double d = ra[i] - rb[i];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / parts;
}

}  // namespace msaff
