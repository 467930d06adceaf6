#include "msaff/affm.hpp"

#include <cmath>

#include "msaff/ops.hpp"

namespace msaff {

void init_affm(ParameterStore& store, const std::string& prefix, int channels,
               int heads, int r, std::mt19937_64& rng) {
  const int d = (channels / heads) / r;
  if (d < 1 || heads * d * r != channels) {
    throw ConfigError("init_affm: h*d*r must equal D; D=" + std::to_string(channels) +
                      " h=" + std::to_string(heads) + " r=" + std::to_string(r));
  }
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    store.set(hp + ".wk", he_init({d, channels}, channels, rng));
    store.set(hp + ".wq", he_init({d, channels}, channels, rng));
    store.set(hp + ".wv", he_init({d, channels}, channels, rng));
  }
  store.set(prefix + ".wo", he_init({heads * d, channels}, heads * d, rng));
  store.set(prefix + ".fc.w", he_init({channels, 2 * channels}, 2 * channels, rng));
  store.set(prefix + ".fc.b", Tensor::zeros({channels}, true));
}

Tensor affm_fuse(const Tensor& a_img, const Tensor& a_ske, const ParameterStore& store,
                 const std::string& prefix, int heads, int r) {
  if (!a_img.defined() || !a_ske.defined() || a_img.dim() != 2 || a_ske.dim() != 2) {
    throw ShapeError("affm_fuse: expects 2-D inputs [D,MI] and [D,MS]");
  }
  const int d_channels = a_img.shape()[0];
  if (a_ske.shape()[0] != d_channels) {
    throw ShapeError("affm_fuse: channel axes disagree, " + shape_str(a_img.shape()) +
                     " vs " + shape_str(a_ske.shape()));
  }
  const int d = (d_channels / heads) / r;
  const Tensor& wk0 = store.at(prefix + ".head0.wk");
  if (wk0.shape()[1] != d_channels || wk0.shape()[0] != d) {
    throw ShapeError("affm_fuse: input channels " + std::to_string(d_channels) +
                     " do not match parameters under " + prefix);
  }
  const int mi = a_img.shape()[1];
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    Tensor k = matmul(store.at(hp + ".wk"), a_img);   // [d,MI]
    Tensor q = matmul(store.at(hp + ".wq"), a_ske);   // [d,MS]
    Tensor v = matmul(store.at(hp + ".wv"), a_ske);   // [d,MS]
    Tensor scores = mul_scalar(matmul(transpose(k), q), scale);  // [MI,MS]
    Tensor attn = softmax(scores, 1);  // rows are convex weights over skeleton parts
    head_outs.push_back(matmul(attn, transpose(v)));  // [MI,d]
  }
  Tensor weight_ske = transpose(matmul(concat(head_outs, 1), store.at(prefix + ".wo")));  // [D,MI]

  // global skeleton descriptor, replicated across silhouette parts
  Tensor bias_ske = add(reduce_mean(a_ske, 1, true), reduce_max(a_ske, 1, true));  // [D,1]
  Tensor weighted = add(weight_ske, bias_ske);

  Tensor fused = concat({a_img, weighted}, 0);  // [2D,MI]
  return add(matmul(store.at(prefix + ".fc.w"), fused),
             reshape(store.at(prefix + ".fc.b"), {d_channels, 1}));
}

PartFeatureSequence affm_fuse_frames(const PartFeatureSequence& img,
                                     const PartFeatureSequence& ske,
                                     const ParameterStore& store, const std::string& prefix,
                                     int heads, int r) {
  const Shape& si = img.values.shape();
  const Shape& ss = ske.values.shape();
  if (si[0] != ss[0]) {
    throw ShapeError("affm_fuse_frames: frame pairing mismatch, " + std::to_string(si[0]) +
                     " silhouette frames vs " + std::to_string(ss[0]) + " skeleton frames");
  }
  const int n = si[0], c = si[1], mi = si[2], ms = ss[2];
  std::vector<Tensor> frames;
  frames.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor fi = reshape(slice(img.values, 0, i, 1), {c, mi});
    Tensor fs = reshape(slice(ske.values, 0, i, 1), {c, ms});
    frames.push_back(reshape(affm_fuse(fi, fs, store, prefix, heads, r), {1, c, mi}));
  }
  return PartFeatureSequence{concat(frames, 0), PartKind::Fused};
}

}  // namespace msaff
