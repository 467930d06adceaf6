#include "msaff/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace msaff {

double Schedule::lr_at(int64_t iteration) const {
  double lr = base_lr;
  for (int64_t m : milestones) {
    if (iteration >= m) lr *= gamma;
  }
  return lr;
}

int ModelConfig::affm_head_dim() const { return (C / h) / r; }

void ModelConfig::validate() const {
  if (K <= 0) throw ConfigError("K must be positive");
  if (Z != 17) throw ConfigError("Z must be 17 (COCO-17 joints), got " + std::to_string(Z));
  if (C <= 0 || out_c <= 0) throw ConfigError("C and out_c must be positive");
  if (height <= 0 || width <= 0) throw ConfigError("input size must be positive");
  if (height % 2 != 0 || width % 2 != 0) {
    throw ConfigError("input size must be even for the stride-2 pool, got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if ((height / 2) % K != 0) {
    throw ConfigError("K=" + std::to_string(K) + " must divide pooled height " +
                      std::to_string(height / 2));
  }
  if (cnn_channels.empty()) throw ConfigError("cnn_channels must not be empty");
  if (cnn_channels.back() != C) {
    throw ConfigError("last CNN channel width must equal C=" + std::to_string(C));
  }
  if (pool_after_layer < 1 || pool_after_layer > static_cast<int>(cnn_channels.size())) {
    throw ConfigError("pool_after_layer out of range");
  }
  if (gt_channels.empty() || gt_channels.back() != C) {
    throw ConfigError("last GT channel width must equal C=" + std::to_string(C));
  }
  for (int c : gt_channels) {
    if (c <= 0 || c % gt_heads != 0) {
      throw ConfigError("GT channel widths must be positive multiples of gt_heads");
    }
  }
  if (h <= 0 || r <= 0 || C % h != 0 || (C / h) % r != 0 || affm_head_dim() < 1) {
    throw ConfigError("AFFM requires h*d*r == C with d >= 1; C=" + std::to_string(C) +
                      " h=" + std::to_string(h) + " r=" + std::to_string(r));
  }
  if (op < 0 || (op > 0 && out_c % op != 0)) {
    throw ConfigError("op=" + std::to_string(op) + " must divide out_c=" + std::to_string(out_c));
  }
  if (frames_n < 1) throw ConfigError("frames_n must be >= 1");
  if (mask_branch != "none" && mask_branch != "silhouette" && mask_branch != "skeleton") {
    throw ConfigError("mask_branch must be none|silhouette|skeleton");
  }
  if (training.p < 1 || training.k < 1) throw ConfigError("batch (p,k) must be >= 1");
  if (training.reduction != "nonzero_mean" && training.reduction != "mean") {
    throw ConfigError("triplet reduction must be nonzero_mean|mean");
  }
}

ModelConfig ModelConfig::preset_casia_b() {
  ModelConfig cfg;
  cfg.preset = "casia_b";
  cfg.K = 32;
  cfg.cnn_channels = {32, 64, 128, 128};
  cfg.training.p = 8;
  cfg.training.k = 8;
  cfg.training.schedule = Schedule{100000, 1e-4, {30000, 60000}, 0.1};
  return cfg;
}

ModelConfig ModelConfig::preset_gait3d() {
  ModelConfig cfg;
  cfg.preset = "gait3d";
  cfg.K = 16;
  cfg.cnn_channels = {32, 32, 64, 64, 128, 128};
  cfg.training.p = 32;
  cfg.training.k = 4;
  cfg.training.schedule = Schedule{100000, 1e-4, {30000, 60000}, 0.1};
  return cfg;
}

ModelConfig ModelConfig::preset_grew() {
  ModelConfig cfg = preset_gait3d();
  cfg.preset = "grew";
  cfg.training.schedule = Schedule{210000, 1e-4, {150000}, 0.1};
  return cfg;
}

ModelConfig ModelConfig::preset_micro() {
  ModelConfig cfg;
  cfg.preset = "custom";
  cfg.K = 4;
  cfg.C = 8;
  cfg.out_c = 8;
  cfg.h = 4;
  cfg.r = 1;
  cfg.cnn_channels = {8, 8, 8, 8};
  cfg.gt_channels = {8, 8, 8};
  cfg.gt_heads = 4;
  cfg.height = 16;
  cfg.width = 12;
  cfg.frames_n = 3;
  cfg.training.p = 2;
  cfg.training.k = 2;
  cfg.training.schedule = Schedule{1000, 1e-3, {}, 0.1};
  return cfg;
}

ModelConfig ModelConfig::from_preset_name(const std::string& name) {
  if (name == "casia_b") return preset_casia_b();
  if (name == "gait3d") return preset_gait3d();
  if (name == "grew") return preset_grew();
  if (name == "micro") return preset_micro();
  throw ConfigError("unknown preset: " + name);
}

namespace {

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["preset"] = cfg.preset;
  j["K"] = cfg.K;
  j["Z"] = cfg.Z;
  j["C"] = cfg.C;
  j["out_c"] = cfg.out_c;
  j["h"] = cfg.h;
  j["r"] = cfg.r;
  j["op"] = cfg.op;
  j["cnn_channels"] = cfg.cnn_channels;
  j["pool_after_layer"] = cfg.pool_after_layer;
  j["gt_channels"] = cfg.gt_channels;
  j["gt_heads"] = cfg.gt_heads;
  j["frames_n"] = cfg.frames_n;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["leaky_slope"] = cfg.leaky_slope;
  j["msstfe_activation"] = cfg.msstfe_activation;
  j["mask_branch"] = cfg.mask_branch;
  j["seed"] = cfg.seed;
  j["training"] = {
      {"p", cfg.training.p},
      {"k", cfg.training.k},
      {"margin", cfg.training.margin},
      {"reduction", cfg.training.reduction},
      {"checkpoint_interval", cfg.training.checkpoint_interval},
      {"schedule",
       {{"total_iterations", cfg.training.schedule.total_iterations},
        {"base_lr", cfg.training.schedule.base_lr},
        {"milestones", cfg.training.schedule.milestones},
        {"gamma", cfg.training.schedule.gamma}}},
  };
  return j;
}

ModelConfig from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (j.contains("preset")) {
    const auto name = j.at("preset").get<std::string>();
    cfg = name == "custom" ? ModelConfig{} : ModelConfig::from_preset_name(name);
    cfg.preset = name;
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("K", cfg.K);
  opt("Z", cfg.Z);
  opt("C", cfg.C);
  opt("out_c", cfg.out_c);
  opt("h", cfg.h);
  opt("r", cfg.r);
  opt("op", cfg.op);
  opt("cnn_channels", cfg.cnn_channels);
  opt("pool_after_layer", cfg.pool_after_layer);
  opt("gt_channels", cfg.gt_channels);
  opt("gt_heads", cfg.gt_heads);
  opt("frames_n", cfg.frames_n);
  opt("height", cfg.height);
  opt("width", cfg.width);
  opt("leaky_slope", cfg.leaky_slope);
  opt("msstfe_activation", cfg.msstfe_activation);
  opt("mask_branch", cfg.mask_branch);
  opt("seed", cfg.seed);
  if (j.contains("training")) {
    const auto& t = j.at("training");
    auto topt = [&](const char* key, auto& field) {
      if (t.contains(key)) field = t.at(key).get<std::decay_t<decltype(field)>>();
    };
    topt("p", cfg.training.p);
    topt("k", cfg.training.k);
    topt("margin", cfg.training.margin);
    topt("reduction", cfg.training.reduction);
    topt("checkpoint_interval", cfg.training.checkpoint_interval);
    if (t.contains("schedule")) {
      const auto& s = t.at("schedule");
      auto sopt = [&](const char* key, auto& field) {
        if (s.contains(key)) field = s.at(key).get<std::decay_t<decltype(field)>>();
      };
      sopt("total_iterations", cfg.training.schedule.total_iterations);
      sopt("base_lr", cfg.training.schedule.base_lr);
      sopt("milestones", cfg.training.schedule.milestones);
      sopt("gamma", cfg.training.schedule.gamma);
    }
  }
  return cfg;
}

}  // namespace

std::string ModelConfig::to_json_string() const { return to_json(*this).dump(2); }

ModelConfig ModelConfig::from_json_string(const std::string& text) {
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

void ModelConfig::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write config: " + file.string());
  out << to_json_string() << '\n';
}

ModelConfig ModelConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read config: " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

}  // namespace msaff
