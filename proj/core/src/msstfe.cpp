#include "msaff/msstfe.hpp"

#include <cmath>

#include "msaff/ops.hpp"

namespace msaff {
namespace {

// M unshared temporal convolutions: part j's [N,C] time series runs through
// its own kernel-3 same-length conv.
Tensor apply_temporal(const Tensor& p, const ParameterStore& store,
                      const std::string& group) {
  const Shape& s = p.shape();
  const int n = s[0], c = s[1], m = s[2];
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const std::string jp = group + "." + std::to_string(j);
    Tensor series = reshape(transpose(reshape(slice(p, 2, j, 1), {n, c})), {1, c, n});
    Tensor out = conv1d_same(series, store.at(jp + ".w"), store.at(jp + ".b"));
    parts.push_back(reshape(transpose(reshape(out, {c, n})), {n, c, 1}));
  }
  return concat(parts, 2);
}

void init_stage(ParameterStore& store, const std::string& spatial,
                const std::string& temporal, int channels, int parts, int s_size,
                std::mt19937_64& rng) {
  store.set(spatial + ".w", he_init({channels, channels, s_size}, channels * s_size, rng));
  store.set(spatial + ".b", Tensor::zeros({channels}, true));
  for (int j = 0; j < parts; ++j) {
    const std::string jp = temporal + "." + std::to_string(j);
    store.set(jp + ".w", he_init({channels, channels, 3}, channels * 3, rng));
    store.set(jp + ".b", Tensor::zeros({channels}, true));
  }
}

}  // namespace

void init_msstfe(ParameterStore& store, const std::string& prefix, int channels, int parts,
                 std::mt19937_64& rng) {
  init_stage(store, prefix + ".part.s1", prefix + ".part.t1", channels, parts, 1, rng);
  init_stage(store, prefix + ".part.s2", prefix + ".part.t2", channels, parts, 1, rng);
  init_stage(store, prefix + ".local.s1", prefix + ".local.t1", channels, parts, 3, rng);
  init_stage(store, prefix + ".local.s2", prefix + ".local.t2", channels, parts, 3, rng);
  for (const char* w : {".global.attn.wk", ".global.attn.wq", ".global.attn.wv"}) {
    store.set(prefix + w, he_init({2, 2}, 2, rng));
  }
  store.set(prefix + ".global.gate.w", he_init({1, 2, 1}, 2, rng));
  store.set(prefix + ".global.gate.b", Tensor::zeros({1}, true));
  for (int j = 0; j < parts; ++j) {
    const std::string jp = prefix + ".global.t3." + std::to_string(j);
    store.set(jp + ".w", he_init({channels, channels, 3}, channels * 3, rng));
    store.set(jp + ".b", Tensor::zeros({channels}, true));
  }
  init_stage(store, prefix + ".global.s3", prefix + ".global.t4", channels, parts, 1, rng);
}

Tensor msstfe_st_stage(const Tensor& p, const ParameterStore& store,
                       const std::string& spatial, const std::string& temporal,
                       const ModelConfig& cfg) {
  if (!p.defined() || p.dim() != 3) {
    throw ShapeError("msstfe: expects [N,C,M] input");
  }
  Tensor out = conv1d_same(p, store.at(spatial + ".w"), store.at(spatial + ".b"));
  out = apply_temporal(out, store, temporal);
  if (cfg.msstfe_activation) out = leaky_relu(out, cfg.leaky_slope);
  return out;
}

Tensor msstfe_branch_part(const Tensor& p, const ParameterStore& store,
                          const std::string& prefix, const ModelConfig& cfg) {
  Tensor out = msstfe_st_stage(p, store, prefix + ".part.s1", prefix + ".part.t1", cfg);
  return msstfe_st_stage(out, store, prefix + ".part.s2", prefix + ".part.t2", cfg);
}

Tensor msstfe_branch_local(const Tensor& p, const ParameterStore& store,
                           const std::string& prefix, const ModelConfig& cfg) {
  Tensor out = msstfe_st_stage(p, store, prefix + ".local.s1", prefix + ".local.t1", cfg);
  return msstfe_st_stage(out, store, prefix + ".local.s2", prefix + ".local.t2", cfg);
}

Tensor msstfe_branch_global(const Tensor& p, const ParameterStore& store,
                            const std::string& prefix, const ModelConfig& cfg) {
  const Shape& s = p.shape();
  const int n = s[0], m = s[2];

  // channel-axis GAP/GMP -> per-frame 2xM descriptors
  Tensor pool = concat({reduce_mean(p, 1, true), reduce_max(p, 1, true)}, 1);  // [N,2,M]

  const Tensor& wk = store.at(prefix + ".global.attn.wk");
  const Tensor& wq = store.at(prefix + ".global.attn.wq");
  const Tensor& wv = store.at(prefix + ".global.attn.wv");
  const double scale = 1.0 / std::sqrt(2.0);
  std::vector<Tensor> attended;
  attended.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor pi = reshape(slice(pool, 0, i, 1), {2, m});
    Tensor k = matmul(wk, pi);
    Tensor q = matmul(wq, pi);
    Tensor v = matmul(wv, pi);
    Tensor scores = mul_scalar(matmul(transpose(k), q), scale);  // [M,M]
    Tensor ai = transpose(matmul(softmax(scores, 1), transpose(v)));  // [2,M]
    attended.push_back(reshape(ai, {1, 2, m}));
  }
  Tensor pool_a = concat(attended, 0);  // [N,2,M]

  Tensor atten = sigmoid(conv1d(pool_a, store.at(prefix + ".global.gate.w"),
                                store.at(prefix + ".global.gate.b"), 0));  // [N,1,M]
  Tensor gated = add(mul(atten, p), p);  // re-weight with residual

  Tensor pgt = apply_temporal(gated, store, prefix + ".global.t3");
  return msstfe_st_stage(pgt, store, prefix + ".global.s3", prefix + ".global.t4", cfg);
}

Tensor msstfe_extract(const Tensor& p, const ParameterStore& store,
                      const std::string& prefix, const ModelConfig& cfg) {
  if (!p.defined() || p.dim() != 3) {
    throw ShapeError("msstfe_extract: expects [N,C,M] input");
  }
  Tensor st_p = msstfe_branch_part(p, store, prefix, cfg);
  Tensor st_l = msstfe_branch_local(p, store, prefix, cfg);
  Tensor st_g = msstfe_branch_global(p, store, prefix, cfg);
  Tensor spliced = concat({st_p, st_l, st_g}, 2);  // [N,C,3M]
  return reduce_max(spliced, 0);                   // [C,3M]
}

}  // namespace msaff
