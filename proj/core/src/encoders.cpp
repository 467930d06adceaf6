#include "msaff/encoders.hpp"

#include <cmath>

#include "msaff/ops.hpp"

namespace msaff {

const std::vector<std::pair<int, int>>& coco17_edges() {
  // nose 0, eyes 1/2, ears 3/4, shoulders 5/6, elbows 7/8, wrists 9/10,
  // hips 11/12, knees 13/14, ankles 15/16
  static const std::vector<std::pair<int, int>> edges = {
      {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12},
      {5, 6},   {5, 7},   {7, 9},   {6, 8},   {8, 10},  {1, 2},  {0, 1},
      {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6}};
  return edges;
}

Tensor coco17_adjacency() {
  constexpr int Z = 17;
  std::vector<double> a(Z * Z, 0.0);
  for (int i = 0; i < Z; ++i) a[i * Z + i] = 1.0;
  for (const auto& [u, v] : coco17_edges()) {
    a[u * Z + v] = 1.0;
    a[v * Z + u] = 1.0;
  }
  for (int i = 0; i < Z; ++i) {
    double deg = 0.0;
    for (int j = 0; j < Z; ++j) deg += a[i * Z + j];
    for (int j = 0; j < Z; ++j) a[i * Z + j] /= deg;
  }
  return Tensor::from_data({Z, Z}, std::move(a));
}

namespace {

std::string layer_name(const std::string& prefix, int i, const char* leaf) {
  return prefix + "." + std::to_string(i) + "." + leaf;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  // x: [Z,C], gamma/beta: [C]; normalize over the channel axis
  const int c = x.shape()[1];
  Tensor mu = reduce_mean(x, 1, true);
  Tensor centered = sub(x, mu);
  Tensor var = reduce_mean(mul(centered, centered), 1, true);
  Tensor denom = sqrt(add_scalar(var, 1e-5));
  Tensor normed = div(centered, denom);
  return add(mul(normed, reshape(gamma, {1, c})), reshape(beta, {1, c}));
}

Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv, const Tensor& wo, int heads) {
  // x: [Z,C]; attention across the joint axis
  const int c = x.shape()[1];
  const int hd = c / heads;
  Tensor q = matmul(x, wq);
  Tensor k = matmul(x, wk);
  Tensor v = matmul(x, wv);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * hd, hd);
    Tensor kh = slice(k, 1, h * hd, hd);
    Tensor vh = slice(v, 1, h * hd, hd);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor attn = softmax(scores, 1);
    outs.push_back(matmul(attn, vh));
  }
  return matmul(concat(outs, 1), wo);
}

}  // namespace

void init_silhouette_encoder(ParameterStore& store, const ModelConfig& cfg,
                             std::mt19937_64& rng) {
  int in_ch = 1;
  for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const int out_ch = cfg.cnn_channels[i];
    store.set(layer_name("cnn", static_cast<int>(i), "w"),
              he_init({out_ch, in_ch, 3, 3}, in_ch * 9, rng));
    store.set(layer_name("cnn", static_cast<int>(i), "b"),
              Tensor::zeros({out_ch}, true));
    in_ch = out_ch;
  }
}

Tensor encode_silhouettes(const SilhouetteSequence& x, const ParameterStore& store,
                          const ModelConfig& cfg) {
  if (!x.frames.defined() || x.frames.dim() != 3) {
    throw DataError("silhouette sequence must be [N,H,W]");
  }
  const Shape& s = x.frames.shape();
  if (s[1] != cfg.height || s[2] != cfg.width) {
    throw DataError("silhouette frames are " + std::to_string(s[1]) + "x" +
                    std::to_string(s[2]) + ", expected " + std::to_string(cfg.height) +
                    "x" + std::to_string(cfg.width) + " after preprocessing");
  }
  const int n = s[0];
  Tensor out = reshape(x.frames, {n, 1, cfg.height, cfg.width});
  for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    const Tensor& w = store.at(layer_name("cnn", static_cast<int>(i), "w"));
    const Tensor& b = store.at(layer_name("cnn", static_cast<int>(i), "b"));
    out = leaky_relu(conv2d(out, w, b, 1, 1), cfg.leaky_slope);
    if (static_cast<int>(i) + 1 == cfg.pool_after_layer) {
      out = max_pool2d(out, 2, 2);
    }
  }
  return out;
}

PartFeatureSequence part_pool(const Tensor& feature_map, int K) {
  if (!feature_map.defined() || feature_map.dim() != 4) {
    throw ShapeError("part_pool: expects [N,C,H,W], got " +
                     (feature_map.defined() ? shape_str(feature_map.shape()) : "undefined"));
  }
  const Shape& s = feature_map.shape();
  const int n = s[0], c = s[1], h = s[2];
  if (K <= 0 || h % K != 0) {
    throw ConfigError("part_pool: K=" + std::to_string(K) + " does not divide map height " +
                      std::to_string(h));
  }
  const int strip = h / K;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) {
    Tensor band = slice(feature_map, 2, i * strip, strip);
    Tensor avg = reduce_mean(reduce_mean(band, 3), 2);
    Tensor mx = reduce_max(reduce_max(band, 3), 2);
    parts.push_back(reshape(add(avg, mx), {n, c, 1}));
  }
  return PartFeatureSequence{concat(parts, 2), PartKind::SilhouetteStrip};
}

void init_skeleton_encoder(ParameterStore& store, const ModelConfig& cfg,
                           std::mt19937_64& rng) {
  int in_ch = 3;
  for (std::size_t i = 0; i < cfg.gt_channels.size(); ++i) {
    const int out_ch = cfg.gt_channels[i];
    const std::string p = "gt." + std::to_string(i);
    store.set(p + ".gc.w", he_init({in_ch, out_ch}, in_ch, rng));
    store.set(p + ".gc.b", Tensor::zeros({out_ch}, true));
    for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"}) {
      store.set(p + w, he_init({out_ch, out_ch}, out_ch, rng));
    }
    store.set(p + ".ln1.gamma", Tensor::full({out_ch}, 1.0, true));
    store.set(p + ".ln1.beta", Tensor::zeros({out_ch}, true));
    store.set(p + ".ln2.gamma", Tensor::full({out_ch}, 1.0, true));
    store.set(p + ".ln2.beta", Tensor::zeros({out_ch}, true));
    store.set(p + ".ff.w1", he_init({out_ch, 2 * out_ch}, out_ch, rng));
    store.set(p + ".ff.b1", Tensor::zeros({2 * out_ch}, true));
    store.set(p + ".ff.w2", he_init({2 * out_ch, out_ch}, 2 * out_ch, rng));
    store.set(p + ".ff.b2", Tensor::zeros({out_ch}, true));
    in_ch = out_ch;
  }
}

PartFeatureSequence encode_skeletons(const SkeletonSequence& x, const ParameterStore& store,
                                     const ModelConfig& cfg) {
  if (!x.joints.defined() || x.joints.dim() != 3 || x.joints.shape()[1] != 3) {
    throw DataError("skeleton sequence must be [N,3,Z]");
  }
  const Shape& s = x.joints.shape();
  if (s[2] != cfg.Z || cfg.Z != 17) {
    throw ConfigError("skeleton joint count " + std::to_string(s[2]) +
                      " does not match Z=17 (COCO-17)");
  }
  const int n = s[0];
  const int c_final = cfg.gt_channels.back();
  const Tensor adj = coco17_adjacency();

  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    // [Z,3] joint-major view of frame i
    Tensor f = transpose(reshape(slice(x.joints, 0, i, 1), {3, cfg.Z}));
    for (std::size_t l = 0; l < cfg.gt_channels.size(); ++l) {
      const std::string p = "gt." + std::to_string(l);
      const int out_ch = cfg.gt_channels[l];
      Tensor g = matmul(adj, f);
      Tensor h = leaky_relu(
          add(matmul(g, store.at(p + ".gc.w")), reshape(store.at(p + ".gc.b"), {1, out_ch})),
          cfg.leaky_slope);
      Tensor h_norm = layer_norm(h, store.at(p + ".ln1.gamma"), store.at(p + ".ln1.beta"));
      Tensor attn = self_attention(h_norm, store.at(p + ".attn.wq"), store.at(p + ".attn.wk"),
                                   store.at(p + ".attn.wv"), store.at(p + ".attn.wo"),
                                   cfg.gt_heads);
      Tensor h2 = add(h, attn);
      Tensor h2_norm = layer_norm(h2, store.at(p + ".ln2.gamma"), store.at(p + ".ln2.beta"));
      Tensor ff = add(matmul(leaky_relu(add(matmul(h2_norm, store.at(p + ".ff.w1")),
                                            reshape(store.at(p + ".ff.b1"), {1, 2 * out_ch})),
                                        cfg.leaky_slope),
                             store.at(p + ".ff.w2")),
                      reshape(store.at(p + ".ff.b2"), {1, out_ch}));
      f = add(h2, ff);
    }
    frames.push_back(reshape(transpose(f), {1, c_final, cfg.Z}));
  }
  return PartFeatureSequence{concat(frames, 0), PartKind::CocoJoint};
}

}  // namespace msaff
