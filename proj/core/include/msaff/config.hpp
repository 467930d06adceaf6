#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msaff/errors.hpp"

namespace msaff {

// Piecewise-constant learning-rate schedule: base_lr scaled by gamma at each
// milestone iteration.
struct Schedule {
  int64_t total_iterations = 100000;
  double base_lr = 1e-4;
  std::vector<int64_t> milestones{30000, 60000};
  double gamma = 0.1;

  double lr_at(int64_t iteration) const;
};

struct TrainingConfig {
  int p = 8;                        // identities per batch
  int k = 8;                        // sequences per identity
  double margin = 0.2;
  std::string reduction = "nonzero_mean";  // or "mean"
  Schedule schedule;
  int64_t checkpoint_interval = 0;  // 0: final checkpoint only
};

// All architecture hyperparameters. Presets follow the published recipes;
// "custom" permits arbitrary desk-scale stacks (micro-configs are a
// first-class feature so gradient checks run in seconds).
struct ModelConfig {
  std::string preset = "casia_b";  // casia_b | gait3d | grew | custom

  int K = 32;       // silhouette parts
  int Z = 17;       // skeleton joints (COCO-17)
  int C = 128;      // feature channels
  int out_c = 256;  // metric-space channels per part
  int h = 4;        // AFFM attention heads
  int r = 2;        // AFFM channel compression ratio
  int op = 0;       // FD-pooling parts (0: pooling disabled)

  std::vector<int> cnn_channels{32, 64, 128, 128};
  int pool_after_layer = 2;  // stride-2 max pool after this conv (1-based)
  std::vector<int> gt_channels{64, 128, 128};
  int gt_heads = 4;

  int frames_n = 30;  // frames sampled per sequence during training
  int height = 64;
  int width = 44;

  double leaky_slope = 0.01;
  bool msstfe_activation = true;  // leaky ReLU after each complete st stage
  std::string mask_branch = "none";  // none | silhouette | skeleton

  uint64_t seed = 0;

  TrainingConfig training;

  int part_count() const { return 9 * K + 3 * Z; }
  int affm_head_dim() const;  // d = (C/h)/r

  void validate() const;  // throws ConfigError

  static ModelConfig preset_casia_b();
  static ModelConfig preset_gait3d();
  static ModelConfig preset_grew();
  // K=4, C=8, 16x12 inputs: small enough for finite-difference validation
  static ModelConfig preset_micro();
  static ModelConfig from_preset_name(const std::string& name);

  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& text);
  void save(const std::filesystem::path& file) const;
  static ModelConfig load(const std::filesystem::path& file);
};

}  // namespace msaff
