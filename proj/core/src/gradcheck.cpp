#include "msaff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "msaff/affm.hpp"
#include "msaff/encoders.hpp"
#include "msaff/model.hpp"
#include "msaff/msstfe.hpp"
#include "msaff/ops.hpp"
#include "msaff/training.hpp"

namespace msaff {

GradcheckRow check_scalar_fn(const std::string& component, const ScalarFn& fn,
                             const std::vector<Tensor>& leaves, const GradcheckOptions& opt,
                             int max_coords_per_leaf) {
  GradcheckRow row;
  row.component = component;

  Tensor loss = fn(leaves);
  if (loss.size() != 1) {
    throw UsageError("gradcheck: component " + component + " did not produce a scalar");
  }
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) analytic.push_back(leaf.grad().data());
  if (component == opt.corrupt_component) {
    for (auto& g : analytic) {
      for (double& v : g) v = v * 1.5 + 0.05;
    }
  }

  std::mt19937_64 coord_rng(opt.seed ^ 0xC0C0C0C0ull);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Tensor& leaf = leaves[li];
    const auto& base = leaf.data();
    std::vector<int64_t> coords(base.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords_per_leaf > 0 && static_cast<int64_t>(base.size()) > max_coords_per_leaf) {
      for (int j = 0; j < max_coords_per_leaf; ++j) {
        std::uniform_int_distribution<int64_t> pick(j, static_cast<int64_t>(base.size()) - 1);
        std::swap(coords[static_cast<std::size_t>(j)],
                  coords[static_cast<std::size_t>(pick(coord_rng))]);
      }
      coords.resize(static_cast<std::size_t>(max_coords_per_leaf));
    }

    for (int64_t c : coords) {
      auto eval_at = [&](double delta) {
        std::vector<Tensor> perturbed = leaves;
        std::vector<double> data = base;
        data[static_cast<std::size_t>(c)] += delta;
        perturbed[li] = Tensor::from_data(leaf.shape(), std::move(data));
        return fn(perturbed).item();
      };
      const double fd = (eval_at(opt.eps) - eval_at(-opt.eps)) / (2.0 * opt.eps);
      const double an = analytic[li][static_cast<std::size_t>(c)];
      const double abs_err = std::abs(an - fd);
      const double denom = std::max(std::abs(an), std::abs(fd));
      const double rel_err = denom > 0.0 ? abs_err / denom : 0.0;
      row.max_abs_err = std::max(row.max_abs_err, abs_err);
      row.max_rel_err = std::max(row.max_rel_err, rel_err);
      if (abs_err > std::max(opt.atol, opt.rtol * denom)) row.pass = false;
      ++row.coords_checked;
    }
  }
  return row;
}

namespace {

Tensor uniform_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi,
                      bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(static_cast<std::size_t>(numel(shape)));
  for (double& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

// Keep values away from the leaky-relu kink so central differences stay
// one-sided-free.
Tensor kink_free(Shape shape, std::mt19937_64& rng, double margin = 0.05) {
  Tensor t = Tensor::randn(shape, rng, 1.0, true);
  std::vector<double> data = t.data();
  for (double& v : data) {
    if (std::abs(v) < margin) v = v < 0.0 ? v - margin : v + margin;
  }
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

// Fixed random projection to a scalar; sensitive to every output entry.
ScalarFn project(std::function<Tensor(const std::vector<Tensor>&)> forward,
                 const Shape& out_shape, std::mt19937_64& rng) {
  Tensor weights = Tensor::randn(out_shape, rng, 1.0);
  return [forward = std::move(forward), weights](const std::vector<Tensor>& leaves) {
    return sum(mul(forward(leaves), weights));
  };
}

void randomize_store(ParameterStore& store, std::mt19937_64& rng, double scale) {
  for (const auto& name : store.names()) {
    store.set(name, Tensor::randn(store.at(name).shape(), rng, scale, true));
  }
}

std::vector<std::string> prefixed_names(const ParameterStore& store, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& name : store.names()) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  return out;
}

ParameterStore with_overrides(const ParameterStore& base, const std::vector<std::string>& names,
                              const std::vector<Tensor>& leaves, std::size_t offset) {
  ParameterStore store = base;
  for (std::size_t i = 0; i < names.size(); ++i) store.set(names[i], leaves[offset + i]);
  return store;
}

ModelConfig tiny_encoder_config() {
  ModelConfig cfg;
  cfg.preset = "custom";
  cfg.K = 2;
  cfg.C = 4;
  cfg.out_c = 4;
  cfg.h = 2;
  cfg.r = 2;
  cfg.cnn_channels = {4, 4};
  cfg.pool_after_layer = 2;
  cfg.gt_channels = {4, 4};
  cfg.gt_heads = 2;
  cfg.height = 8;
  cfg.width = 4;
  cfg.frames_n = 2;
  return cfg;
}

struct Scenario {
  std::vector<Tensor> leaves;
  ScalarFn fn;
  int max_coords = 0;
};

using ScenarioMaker = std::function<Scenario(std::mt19937_64&, const GradcheckOptions&)>;

Scenario make_op_scenario(const std::string& name, std::mt19937_64& rng,
                          const GradcheckOptions& opt) {
  Scenario s;
  auto coin = [&rng](int n) {
    std::uniform_int_distribution<int> d(0, n - 1);
    return d(rng);
  };
  if (name == "conv2d") {
    const int stride = 1 + coin(2), padding = coin(2);
    s.leaves = {Tensor::randn({2, 2, 5, 4}, rng, 1.0, true),
                Tensor::randn({3, 2, 3, 3}, rng, 0.5, true),
                Tensor::randn({3}, rng, 0.5, true)};
    const int oh = (5 + 2 * padding - 3) / stride + 1;
    const int ow = (4 + 2 * padding - 3) / stride + 1;
    s.fn = project([stride, padding](const std::vector<Tensor>& l) {
      return conv2d(l[0], l[1], l[2], stride, padding);
    }, {2, 3, oh, ow}, rng);
  } else if (name == "conv1d") {
    const int padding = coin(2);
    s.leaves = {Tensor::randn({2, 3, 7}, rng, 1.0, true),
                Tensor::randn({4, 3, 3}, rng, 0.5, true),
                Tensor::randn({4}, rng, 0.5, true)};
    s.fn = project([padding](const std::vector<Tensor>& l) {
      return conv1d(l[0], l[1], l[2], padding);
    }, {2, 4, 7 + 2 * padding - 2}, rng);
  } else if (name == "matmul") {
    s.leaves = {Tensor::randn({3, 4}, rng, 1.0, true), Tensor::randn({4, 2}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return matmul(l[0], l[1]); }, {3, 2}, rng);
  } else if (name == "transpose") {
    s.leaves = {Tensor::randn({3, 4}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return transpose(l[0]); }, {4, 3}, rng);
  } else if (name == "permute") {
    s.leaves = {Tensor::randn({2, 3, 4}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return permute(l[0], {2, 0, 1}); },
                   {4, 2, 3}, rng);
  } else if (name == "reshape") {
    s.leaves = {Tensor::randn({2, 6}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return reshape(l[0], {3, 4}); }, {3, 4}, rng);
  } else if (name == "softmax") {
    const int axis = coin(2);
    s.leaves = {Tensor::randn({3, 5}, rng, 2.0, true)};
    s.fn = project([axis](const std::vector<Tensor>& l) { return softmax(l[0], axis); }, {3, 5}, rng);
  } else if (name == "sigmoid") {
    s.leaves = {Tensor::randn({7}, rng, 2.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return sigmoid(l[0]); }, {7}, rng);
  } else if (name == "leaky_relu") {
    s.leaves = {kink_free({9}, rng)};
    s.fn = project([](const std::vector<Tensor>& l) { return leaky_relu(l[0], 0.01); }, {9}, rng);
  } else if (name == "relu") {
    s.leaves = {kink_free({9}, rng)};
    s.fn = project([](const std::vector<Tensor>& l) { return relu(l[0]); }, {9}, rng);
  } else if (name == "sqrt") {
    s.leaves = {uniform_tensor({6}, rng, 0.5, 2.5, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return sqrt(l[0]); }, {6}, rng);
  } else if (name == "max_pool2d") {
    s.leaves = {Tensor::randn({1, 2, 6, 6}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return max_pool2d(l[0], 2, 2); },
                   {1, 2, 3, 3}, rng);
  } else if (name == "reduce_mean" || name == "reduce_max" || name == "reduce_sum") {
    const int axis = coin(3);
    s.leaves = {Tensor::randn({3, 4, 2}, rng, 1.0, true)};
    Shape out{3, 4, 2};
    out.erase(out.begin() + axis);
    s.fn = project([name, axis](const std::vector<Tensor>& l) {
      if (name == "reduce_mean") return reduce_mean(l[0], axis);
      if (name == "reduce_max") return reduce_max(l[0], axis);
      return reduce_sum(l[0], axis);
    }, out, rng);
  } else if (name == "sum") {
    s.leaves = {Tensor::randn({5}, rng, 1.0, true)};
    s.fn = [](const std::vector<Tensor>& l) { return sum(l[0]); };
  } else if (name == "concat") {
    s.leaves = {Tensor::randn({2, 3}, rng, 1.0, true), Tensor::randn({2, 2}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return concat({l[0], l[1]}, 1); }, {2, 5}, rng);
  } else if (name == "slice") {
    s.leaves = {Tensor::randn({3, 6}, rng, 1.0, true)};
    s.fn = project([](const std::vector<Tensor>& l) { return slice(l[0], 1, 1, 3); }, {3, 3}, rng);
  } else if (name == "add" || name == "sub" || name == "mul") {
    const int mode = coin(3);
    Shape bshape = mode == 0 ? Shape{3, 4} : (mode == 1 ? Shape{1, 4} : Shape{3, 1});
    s.leaves = {Tensor::randn({3, 4}, rng, 1.0, true), Tensor::randn(bshape, rng, 1.0, true)};
    s.fn = project([name](const std::vector<Tensor>& l) {
      if (name == "add") return add(l[0], l[1]);
      if (name == "sub") return sub(l[0], l[1]);
      return mul(l[0], l[1]);
    }, {3, 4}, rng);
  } else if (name == "div") {
    Tensor denom = Tensor::randn({3, 4}, rng, 1.0, true);
    std::vector<double> d = denom.data();
    for (double& v : d) v = (v < 0.0 ? -1.0 : 1.0) * (std::abs(v) + 0.5);
    s.leaves = {Tensor::randn({3, 4}, rng, 1.0, true),
                Tensor::from_data({3, 4}, std::move(d), true)};
    s.fn = project([](const std::vector<Tensor>& l) { return div(l[0], l[1]); }, {3, 4}, rng);
  } else if (name == "add_scalar" || name == "mul_scalar") {
    s.leaves = {Tensor::randn({6}, rng, 1.0, true)};
    s.fn = project([name](const std::vector<Tensor>& l) {
      return name == "add_scalar" ? add_scalar(l[0], 0.7) : mul_scalar(l[0], -1.3);
    }, {6}, rng);
  } else {
    throw UsageError("unknown op scenario: " + name);
  }
  (void)opt;
  return s;
}

Scenario make_affm_scenario(std::mt19937_64& rng, const GradcheckOptions&) {
  const int d_channels = 8, heads = 2, r = 2, mi = 3, ms = 4;
  ParameterStore base;
  init_affm(base, "affm", d_channels, heads, r, rng);
  randomize_store(base, rng, 0.5);
  auto names = prefixed_names(base, "affm");

  Scenario s;
  for (const auto& n : names) s.leaves.push_back(base.at(n));
  s.leaves.push_back(Tensor::randn({d_channels, mi}, rng, 1.0, true));
  s.leaves.push_back(Tensor::randn({d_channels, ms}, rng, 1.0, true));
  s.fn = project([base, names, heads, r](const std::vector<Tensor>& l) {
    ParameterStore store = with_overrides(base, names, l, 0);
    return affm_fuse(l[names.size()], l[names.size() + 1], store, "affm", heads, r);
  }, {d_channels, mi}, rng);
  return s;
}

Scenario make_msstfe_scenario(const std::string& branch, std::mt19937_64& rng,
                              const GradcheckOptions&) {
  const int c = 4, m = 3, n = 3;
  ModelConfig cfg = tiny_encoder_config();
  cfg.C = c;
  ParameterStore base;
  init_msstfe(base, "ms", c, m, rng);
  randomize_store(base, rng, 0.5);
  auto names = prefixed_names(base, "ms." + branch);

  Scenario s;
  for (const auto& nm : names) s.leaves.push_back(base.at(nm));
  s.leaves.push_back(Tensor::randn({n, c, m}, rng, 1.0, true));
  s.fn = project([base, names, branch, cfg](const std::vector<Tensor>& l) {
    ParameterStore store = with_overrides(base, names, l, 0);
    const Tensor& input = l[names.size()];
    if (branch == "part") return msstfe_branch_part(input, store, "ms", cfg);
    if (branch == "local") return msstfe_branch_local(input, store, "ms", cfg);
    return msstfe_branch_global(input, store, "ms", cfg);
  }, {n, c, m}, rng);
  return s;
}

Scenario make_cnn_scenario(std::mt19937_64& rng, const GradcheckOptions&) {
  ModelConfig cfg = tiny_encoder_config();
  ParameterStore base;
  init_silhouette_encoder(base, cfg, rng);
  randomize_store(base, rng, 0.5);
  auto names = base.names();

  Scenario s;
  for (const auto& nm : names) s.leaves.push_back(base.at(nm));
  s.leaves.push_back(uniform_tensor({2, cfg.height, cfg.width}, rng, 0.0, 1.0, true));
  s.fn = project([base, names, cfg](const std::vector<Tensor>& l) {
    ParameterStore store = with_overrides(base, names, l, 0);
    SilhouetteSequence seq{l[names.size()], "s", "v", "c"};
    return encode_silhouettes(seq, store, cfg);
  }, {2, cfg.C, cfg.height / 2, cfg.width / 2}, rng);
  return s;
}

Scenario make_gt_scenario(std::mt19937_64& rng, const GradcheckOptions&) {
  ModelConfig cfg = tiny_encoder_config();
  ParameterStore base;
  init_skeleton_encoder(base, cfg, rng);
  randomize_store(base, rng, 0.4);
  auto names = base.names();

  Scenario s;
  for (const auto& nm : names) s.leaves.push_back(base.at(nm));
  s.leaves.push_back(Tensor::randn({2, 3, 17}, rng, 0.4, true));
  s.fn = project([base, names, cfg](const std::vector<Tensor>& l) {
    ParameterStore store = with_overrides(base, names, l, 0);
    SkeletonSequence seq{l[names.size()], "s", "v", "c"};
    return encode_skeletons(seq, store, cfg).values;
  }, {2, cfg.C, 17}, rng);
  return s;
}

Scenario make_model_scenario(std::mt19937_64& rng, const GradcheckOptions& opt) {
  ModelConfig cfg = ModelConfig::preset_micro();
  cfg.frames_n = 2;
  MsaffModel model(cfg);
  ParameterStore base;
  model.init_params(base, rng);
  randomize_store(base, rng, 0.4);
  auto names = base.names();

  Scenario s;
  s.max_coords = std::max(1, opt.model_coords_per_leaf);
  for (const auto& nm : names) s.leaves.push_back(base.at(nm));
  s.leaves.push_back(uniform_tensor({2, cfg.height, cfg.width}, rng, 0.0, 1.0, true));
  s.leaves.push_back(Tensor::randn({2, 3, 17}, rng, 0.4, true));
  s.fn = project([base, names, model = std::move(model)](const std::vector<Tensor>& l) {
    ParameterStore store = with_overrides(base, names, l, 0);
    SilhouetteSequence sil{l[names.size()], "s", "v", "c"};
    SkeletonSequence ske{l[names.size() + 1], "s", "v", "c"};
    return model.forward(sil, ske, store).values;
  }, {cfg.part_count(), cfg.out_c}, rng);
  return s;
}

Scenario make_loss_scenario(std::mt19937_64& rng, const GradcheckOptions&) {
  const int b = 4, parts = 3, dim = 5;
  const double margin = 0.2;
  const std::vector<int> labels{0, 0, 1, 1};
  // keep every hinge term away from its kink so FD stays two-sided
  for (int attempt = 0; attempt < 64; ++attempt) {
    Tensor emb = Tensor::randn({b, parts, dim}, rng, 1.0, true);
    bool clean = true;
    for (int m = 0; m < parts && clean; ++m) {
      for (int a = 0; a < b && clean; ++a) {
        for (int p = 0; p < b && clean; ++p) {
          if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)]) continue;
          for (int n = 0; n < b; ++n) {
            if (labels[static_cast<std::size_t>(n)] == labels[static_cast<std::size_t>(a)]) continue;
            auto dist = [&](int i, int j) {
              double sq = 0.0;
              for (int q = 0; q < dim; ++q) {
                const double d = emb.at({i, m, q}) - emb.at({j, m, q});
                sq += d * d;
              }
              return std::sqrt(sq);
            };
            if (std::abs(margin + dist(a, p) - dist(a, n)) < 5e-3) {
              clean = false;
              break;
            }
          }
        }
      }
    }
    if (!clean) continue;
    Scenario s;
    s.leaves = {emb};
    s.fn = [labels, margin](const std::vector<Tensor>& l) {
      return ba_triplet_loss(TripletBatch{l[0], labels}, margin, "nonzero_mean");
    };
    return s;
  }
  throw NumericError("gradcheck: could not build a kink-free triplet batch");
}

}  // namespace

const std::vector<std::string>& differentiable_op_manifest() {
  static const std::vector<std::string> ops = {
      "conv2d",     "conv1d",  "matmul",      "transpose",  "permute",
      "reshape",    "softmax", "sigmoid",     "leaky_relu", "relu",
      "sqrt",       "max_pool2d", "reduce_mean", "reduce_max", "reduce_sum",
      "sum",        "concat",  "slice",       "add",        "sub",
      "mul",        "div",     "add_scalar",  "mul_scalar"};
  return ops;
}

bool covers_manifest(const std::vector<GradcheckRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows) names.insert(r.component);
  for (const auto& op : differentiable_op_manifest()) {
    if (!names.count(op)) return false;
  }
  return true;
}

std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckOptions& opt) {
  std::vector<std::pair<std::string, ScenarioMaker>> components;
  for (const auto& op : differentiable_op_manifest()) {
    components.emplace_back(op, [op](std::mt19937_64& rng, const GradcheckOptions& o) {
      return make_op_scenario(op, rng, o);
    });
  }
  components.emplace_back("affm.fuse", make_affm_scenario);
  for (const char* branch : {"part", "local", "global"}) {
    components.emplace_back(std::string("msstfe.branch_") + branch,
                            [branch](std::mt19937_64& rng, const GradcheckOptions& o) {
                              return make_msstfe_scenario(branch, rng, o);
                            });
  }
  components.emplace_back("encoders.cnn", make_cnn_scenario);
  components.emplace_back("encoders.gt", make_gt_scenario);
  components.emplace_back("training.ba_triplet_loss", make_loss_scenario);
  components.emplace_back("model.forward", make_model_scenario);

  std::vector<GradcheckRow> rows;
  rows.reserve(components.size());
  for (const auto& [name, make] : components) {
    int trials = opt.trials;
    if (name == "encoders.cnn" || name == "encoders.gt" || name.rfind("msstfe", 0) == 0 ||
        name == "affm.fuse") {
      trials = std::min(trials, 3);
    }
    if (name == "model.forward") trials = 1;

    GradcheckRow row;
    row.component = name;
    for (int t = 0; t < trials; ++t) {
      std::mt19937_64 rng(opt.seed + 7919ull * static_cast<uint64_t>(t) +
                          std::hash<std::string>{}(name));
      Scenario s = make(rng, opt);
      GradcheckRow r = check_scalar_fn(name, s.fn, s.leaves, opt, s.max_coords);
      row.max_abs_err = std::max(row.max_abs_err, r.max_abs_err);
      row.max_rel_err = std::max(row.max_rel_err, r.max_rel_err);
      row.coords_checked += r.coords_checked;
      row.pass = row.pass && r.pass;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace msaff
