#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msaff/encoders.hpp"
#include "msaff/tensor.hpp"

namespace msaff {

// Parameterized multimodal walker. Identities differ in gait frequency by at
// least `min_param_gap`; sequences of one identity share all kinematic
// parameters and differ only by coordinate noise.
struct SyntheticSpec {
  int identities = 8;
  int sequences_per_identity = 4;
  int frames = 30;
  int height = 64;
  int width = 44;
  double noise = 0.0;          // coordinate noise, fraction of canvas height
  double min_param_gap = 0.015;
  int train_identities = -1;   // first N identities; -1: all (empty test split)
  uint64_t seed = 0;

  std::string to_json_string() const;
  static SyntheticSpec from_json_string(const std::string& text);
  void save(const std::filesystem::path& file) const;
  static SyntheticSpec load(const std::filesystem::path& file);
};

struct DatasetEntry {
  std::string subject;
  std::string condition;
  std::string view;
  Tensor silhouette_frames;  // [N,H,W] binary
  Tensor skeleton_joints;    // [N,3,17]
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;

  std::vector<int> train_entry_indices() const;
  std::vector<int> test_entry_indices() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Directory layout: <root>/manifest.json plus, per entry,
// <subject>/<condition>/<view>/frame_NNNN.pgm and skeleton.json.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& manifest_file);

// Binary PGM (P5, maxval 255). Loads {0..255} bytes as [0,1] doubles.
void write_pgm(const std::filesystem::path& file, const double* pixels, int height, int width);
std::vector<double> read_pgm(const std::filesystem::path& file, int& height, int& width);

SilhouetteSequence to_silhouette(const DatasetEntry& entry);
SkeletonSequence to_skeleton(const DatasetEntry& entry);
// Gather the given frame indices from an entry (training-time subsampling).
std::pair<SilhouetteSequence, SkeletonSequence> subsample(const DatasetEntry& entry,
                                                          const std::vector<int>& frames);

}  // namespace msaff
