#include "msaff/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace msaff {

namespace fs = std::filesystem;

std::string SyntheticSpec::to_json_string() const {
  nlohmann::json j{{"identities", identities},
                   {"sequences_per_identity", sequences_per_identity},
                   {"frames", frames},
                   {"height", height},
                   {"width", width},
                   {"noise", noise},
                   {"min_param_gap", min_param_gap},
                   {"train_identities", train_identities},
                   {"seed", seed}};
  return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json_string(const std::string& text) {
  SyntheticSpec spec;
  try {
    auto j = nlohmann::json::parse(text);
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("identities", spec.identities);
    opt("sequences_per_identity", spec.sequences_per_identity);
    opt("frames", spec.frames);
    opt("height", spec.height);
    opt("width", spec.width);
    opt("noise", spec.noise);
    opt("min_param_gap", spec.min_param_gap);
    opt("train_identities", spec.train_identities);
    opt("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec parse error: ") + e.what());
  }
  return spec;
}

void SyntheticSpec::save(const fs::path& file) const {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write synthetic spec: " + file.string());
  out << to_json_string() << '\n';
}

SyntheticSpec SyntheticSpec::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read synthetic spec: " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::vector<int> Dataset::train_entry_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (std::find(train_subjects.begin(), train_subjects.end(), entries[i].subject) !=
        train_subjects.end()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<int> Dataset::test_entry_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (std::find(test_subjects.begin(), test_subjects.end(), entries[i].subject) !=
        test_subjects.end()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

namespace {

constexpr int kJoints = 17;

struct WalkerParams {
  double freq;        // cycles per frame
  double phase;
  double swing_amp;   // leg swing amplitude, radians
  double bob_amp;     // vertical bob, canvas units
  double torso;
  double neck;
  double head_r;
  double shoulder_w;
  double hip_w;
  double upper_leg;
  double lower_leg;
  double upper_arm;
  double lower_arm;
};

uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ull * (a + 1) + 0xBF58476D1CE4E5B9ull * (b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

WalkerParams identity_params(const SyntheticSpec& spec, int identity) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0xA11CE, static_cast<uint64_t>(identity)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WalkerParams p;
  // deterministic frequency spread guarantees the min inter-identity gap
  p.freq = 0.08 + identity * std::max(spec.min_param_gap, 0.012);
  p.phase = 2.0 * std::numbers::pi * u(rng);
  p.swing_amp = 0.30 + 0.15 * u(rng);
  p.bob_amp = 0.015 + 0.01 * u(rng);
  p.torso = 0.30 + 0.05 * u(rng);
  p.neck = 0.06 + 0.02 * u(rng);
  p.head_r = 0.055 + 0.015 * u(rng);
  p.shoulder_w = 0.12 + 0.04 * u(rng);
  p.hip_w = 0.09 + 0.03 * u(rng);
  p.upper_leg = 0.16 + 0.05 * u(rng);
  p.lower_leg = 0.16 + 0.05 * u(rng);
  p.upper_arm = 0.11 + 0.03 * u(rng);
  p.lower_arm = 0.10 + 0.03 * u(rng);
  return p;
}

// 2-D pose at frame t, canvas units (y down, canvas height 1.0).
// Joint order: COCO-17.
std::array<std::pair<double, double>, kJoints> pose_at(const WalkerParams& p, int t,
                                                       double aspect) {
  const double cycle = 2.0 * std::numbers::pi * p.freq * t + p.phase;
  const double bob = p.bob_amp * std::sin(cycle);
  const double swing = p.swing_amp * std::sin(cycle);
  const double cx = 0.5 * aspect;

  std::array<std::pair<double, double>, kJoints> j;
  const double pelvis_y = 0.52 + bob;
  const double shoulder_y = pelvis_y - p.torso;
  const double nose_y = shoulder_y - p.neck - p.head_r * 0.5;

  j[0] = {cx + 0.01, nose_y};                       // nose
  j[1] = {cx - 0.012, nose_y - 0.012};              // left eye
  j[2] = {cx + 0.028, nose_y - 0.012};              // right eye
  j[3] = {cx - 0.03, nose_y + 0.004};               // left ear
  j[4] = {cx + 0.045, nose_y + 0.004};              // right ear
  j[5] = {cx - p.shoulder_w / 2, shoulder_y};       // left shoulder
  j[6] = {cx + p.shoulder_w / 2, shoulder_y};       // right shoulder
  j[11] = {cx - p.hip_w / 2, pelvis_y};             // left hip
  j[12] = {cx + p.hip_w / 2, pelvis_y};             // right hip

  auto limb = [](std::pair<double, double> from, double len, double angle) {
    return std::pair<double, double>{from.first + len * std::sin(angle),
                                     from.second + len * std::cos(angle)};
  };

  // legs swing in opposite phase; knees flex into the swing
  const double lknee_a = swing;
  const double rknee_a = -swing;
  j[13] = limb(j[11], p.upper_leg, lknee_a);
  j[14] = limb(j[12], p.upper_leg, rknee_a);
  j[15] = limb(j[13], p.lower_leg, lknee_a * 0.5 - 0.15 * std::abs(std::cos(cycle)));
  j[16] = limb(j[14], p.lower_leg, rknee_a * 0.5 + 0.15 * std::abs(std::cos(cycle)));

  // arms counter-swing
  j[7] = limb(j[5], p.upper_arm, -swing * 0.8);
  j[8] = limb(j[6], p.upper_arm, swing * 0.8);
  j[9] = limb(j[7], p.lower_arm, -swing * 0.8 - 0.1);
  j[10] = limb(j[8], p.lower_arm, swing * 0.8 + 0.1);
  return j;
}

struct Bone {
  int a, b;
  double radius;  // canvas units
};

const std::vector<Bone>& silhouette_bones() {
  static const std::vector<Bone> bones = {
      {5, 6, 0.045},   {11, 12, 0.045}, {5, 11, 0.055}, {6, 12, 0.055},  // torso box
      {5, 7, 0.028},   {7, 9, 0.024},   {6, 8, 0.028},  {8, 10, 0.024},  // arms
      {11, 13, 0.034}, {13, 15, 0.030}, {12, 14, 0.034}, {14, 16, 0.030},  // legs
  };
  return bones;
}

double point_segment_dist(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0.0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

void rasterize(const std::array<std::pair<double, double>, kJoints>& pose,
               const WalkerParams& p, int height, int width, double* out) {
  const double scale = static_cast<double>(height);
  const double head_cx = (pose[1].first + pose[2].first) * 0.5;
  const double head_cy = pose[0].second - p.head_r * 0.3;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double px = (c + 0.5) / scale;
      const double py = (r + 0.5) / scale;
      bool inside = false;
      const double hd = std::hypot(px - head_cx, py - head_cy);
      if (hd <= p.head_r) inside = true;
      for (const Bone& bone : silhouette_bones()) {
        if (inside) break;
        const auto& a = pose[static_cast<std::size_t>(bone.a)];
        const auto& b = pose[static_cast<std::size_t>(bone.b)];
        if (point_segment_dist(px, py, a.first, a.second, b.first, b.second) <= bone.radius) {
          inside = true;
        }
      }
      out[static_cast<int64_t>(r) * width + c] = inside ? 1.0 : 0.0;
    }
  }
}

std::string subject_name(int identity) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%03d", identity);
  return buf;
}

std::string condition_name(int sequence) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "nm-%02d", sequence + 1);
  return buf;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.frames < 4) throw ConfigError("synthetic spec: frames must be >= 4");
  if (spec.identities < 2) throw ConfigError("synthetic spec: identity count must be >= 2");
  if (spec.sequences_per_identity < 1) {
    throw ConfigError("synthetic spec: sequences_per_identity must be >= 1");
  }
  if (spec.height < 8 || spec.width < 8) {
    throw ConfigError("synthetic spec: canvas must be at least 8x8");
  }

  Dataset dataset;
  const double aspect = static_cast<double>(spec.width) / spec.height;
  for (int id = 0; id < spec.identities; ++id) {
    const WalkerParams p = identity_params(spec, id);
    if (p.upper_leg <= 0.0 || p.lower_leg <= 0.0 || p.torso <= 0.0) {
      throw ConfigError("synthetic spec: degenerate limb lengths");
    }
    for (int seq = 0; seq < spec.sequences_per_identity; ++seq) {
      std::mt19937_64 noise_rng(
          mix_seed(spec.seed, static_cast<uint64_t>(id), static_cast<uint64_t>(seq)));
      std::normal_distribution<double> gauss(0.0, 1.0);

      DatasetEntry entry;
      entry.subject = subject_name(id);
      entry.condition = condition_name(seq);
      entry.view = "000";

      std::vector<double> sil(static_cast<std::size_t>(spec.frames) * spec.height * spec.width);
      std::vector<double> ske(static_cast<std::size_t>(spec.frames) * 3 * kJoints);
      for (int t = 0; t < spec.frames; ++t) {
        auto pose = pose_at(p, t, aspect);
        for (auto& [x, y] : pose) {
          x += spec.noise * gauss(noise_rng);
          y += spec.noise * gauss(noise_rng);
        }
        rasterize(pose, p, spec.height, spec.width,
                  sil.data() + static_cast<int64_t>(t) * spec.height * spec.width);
        double* frame = ske.data() + static_cast<int64_t>(t) * 3 * kJoints;
        for (int z = 0; z < kJoints; ++z) {
          frame[z] = pose[static_cast<std::size_t>(z)].first;
          frame[kJoints + z] = pose[static_cast<std::size_t>(z)].second;
          frame[2 * kJoints + z] = 1.0;
        }
      }
      entry.silhouette_frames =
          Tensor::from_data({spec.frames, spec.height, spec.width}, std::move(sil));
      entry.skeleton_joints = Tensor::from_data({spec.frames, 3, kJoints}, std::move(ske));
      dataset.entries.push_back(std::move(entry));
    }
    const bool is_train = spec.train_identities < 0 || id < spec.train_identities;
    (is_train ? dataset.train_subjects : dataset.test_subjects).push_back(subject_name(id));
  }
  return dataset;
}

void write_pgm(const fs::path& file, const double* pixels, int height, int width) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write PGM: " + file.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(width));
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double v = pixels[static_cast<int64_t>(r) * width + c];
      row[static_cast<std::size_t>(c)] =
          static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
    out.write(reinterpret_cast<const char*>(row.data()), width);
  }
  if (!out) throw DataError("short write to PGM: " + file.string());
}

std::vector<double> read_pgm(const fs::path& file, int& height, int& width) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open PGM: " + file.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto fail = [&](const std::string& why) {
    throw DataError("PGM parse error in " + file.string() + " at byte " +
                    std::to_string(pos) + ": " + why);
  };
  auto skip_space = [&] {
    while (pos < blob.size() && std::isspace(static_cast<unsigned char>(blob[pos]))) ++pos;
  };
  auto read_int = [&]() -> int {
    skip_space();
    std::size_t start = pos;
    while (pos < blob.size() && std::isdigit(static_cast<unsigned char>(blob[pos]))) ++pos;
    if (pos == start) fail("expected integer");
    return std::stoi(blob.substr(start, pos - start));
  };

  if (blob.size() < 2 || blob[0] != 'P' || blob[1] != '5') fail("missing P5 magic");
  pos = 2;
  width = read_int();
  height = read_int();
  const int maxval = read_int();
  if (maxval != 255) fail("maxval must be 255, got " + std::to_string(maxval));
  if (pos >= blob.size() || !std::isspace(static_cast<unsigned char>(blob[pos]))) {
    fail("expected single whitespace before raster");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * height;
  if (blob.size() - pos < need) fail("raster truncated");

  std::vector<double> out(need);
  for (std::size_t i = 0; i < need; ++i) {
    out[i] = static_cast<unsigned char>(blob[pos + i]) / 255.0;
  }
  return out;
}

namespace {

std::string entry_dir(const DatasetEntry& e) {
  return e.subject + "/" + e.condition + "/" + e.view;
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  nlohmann::json manifest;
  manifest["format"] = "msaff-dataset";
  manifest["version"] = 1;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : dataset.entries) {
    const std::string rel = entry_dir(e);
    const fs::path dir = root / rel;
    fs::create_directories(dir);
    const Shape& s = e.silhouette_frames.shape();
    const int n = s[0], h = s[1], w = s[2];
    for (int t = 0; t < n; ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04d.pgm", t);
      write_pgm(dir / name,
                e.silhouette_frames.data().data() + static_cast<int64_t>(t) * h * w, h, w);
    }
    nlohmann::json joints = nlohmann::json::array();
    for (int t = 0; t < n; ++t) {
      nlohmann::json frame = nlohmann::json::array();
      for (int z = 0; z < kJoints; ++z) {
        frame.push_back({e.skeleton_joints.at({t, 0, z}), e.skeleton_joints.at({t, 1, z}),
                         e.skeleton_joints.at({t, 2, z})});
      }
      joints.push_back(std::move(frame));
    }
    std::ofstream sk(dir / "skeleton.json", std::ios::trunc);
    if (!sk) throw DataError("cannot write skeleton json under " + dir.string());
    sk << nlohmann::json{{"joints", std::move(joints)}}.dump() << '\n';

    entries.push_back({{"subject", e.subject},
                       {"condition", e.condition},
                       {"view", e.view},
                       {"silhouette_dir", rel},
                       {"skeleton", rel + "/skeleton.json"},
                       {"frames", n}});
  }
  manifest["entries"] = std::move(entries);
  manifest["split"] = {{"train", dataset.train_subjects}, {"test", dataset.test_subjects}};
  std::ofstream out(root / "manifest.json", std::ios::trunc);
  if (!out) throw DataError("cannot write manifest under " + root.string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw DataError("cannot open manifest: " + manifest_file.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest parse error in " + manifest_file.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "msaff-dataset") {
    throw DataError("not a dataset manifest: " + manifest_file.string());
  }
  const fs::path root = manifest_file.parent_path();

  Dataset dataset;
  dataset.train_subjects = manifest.at("split").at("train").get<std::vector<std::string>>();
  dataset.test_subjects = manifest.at("split").at("test").get<std::vector<std::string>>();
  for (const auto& train_subject : dataset.train_subjects) {
    for (const auto& test_subject : dataset.test_subjects) {
      if (train_subject == test_subject) {
        throw DataError("train/test identity lists overlap on subject " + train_subject);
      }
    }
  }

  for (const auto& je : manifest.at("entries")) {
    DatasetEntry entry;
    entry.subject = je.at("subject").get<std::string>();
    entry.condition = je.at("condition").get<std::string>();
    entry.view = je.at("view").get<std::string>();
    const std::string label = entry.subject + "/" + entry.condition + "/" + entry.view;

    const fs::path dir = root / je.at("silhouette_dir").get<std::string>();
    std::vector<fs::path> frame_files;
    if (fs::is_directory(dir)) {
      for (const auto& f : fs::directory_iterator(dir)) {
        if (f.path().extension() == ".pgm") frame_files.push_back(f.path());
      }
    }
    std::sort(frame_files.begin(), frame_files.end());
    if (frame_files.empty()) {
      throw DataError("entry " + label + " has no silhouette frames under " + dir.string());
    }

    int h = 0, w = 0;
    std::vector<double> sil;
    for (const auto& f : frame_files) {
      int fh = 0, fw = 0;
      auto pixels = read_pgm(f, fh, fw);
      if (h == 0) {
        h = fh;
        w = fw;
        sil.reserve(frame_files.size() * pixels.size());
      } else if (fh != h || fw != w) {
        throw DataError("entry " + label + " mixes frame sizes");
      }
      sil.insert(sil.end(), pixels.begin(), pixels.end());
    }
    const int sil_frames = static_cast<int>(frame_files.size());

    const fs::path skel_file = root / je.at("skeleton").get<std::string>();
    std::ifstream sk(skel_file);
    if (!sk) throw DataError("cannot open skeleton file: " + skel_file.string());
    nlohmann::json joints_doc;
    try {
      sk >> joints_doc;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("skeleton parse error in " + skel_file.string() + ": " + e.what());
    }
    const auto& joints = joints_doc.at("joints");
    const int ske_frames = static_cast<int>(joints.size());
    if (ske_frames != sil_frames) {
      throw DataError("frame alignment mismatch for entry " + label + ": " +
                      std::to_string(sil_frames) + " silhouette frames vs " +
                      std::to_string(ske_frames) + " skeleton frames");
    }
    std::vector<double> ske(static_cast<std::size_t>(ske_frames) * 3 * kJoints);
    for (int t = 0; t < ske_frames; ++t) {
      const auto& frame = joints.at(static_cast<std::size_t>(t));
      if (frame.size() != kJoints) {
        throw DataError("entry " + label + " frame " + std::to_string(t) + " has " +
                        std::to_string(frame.size()) + " joints, expected 17");
      }
      for (int z = 0; z < kJoints; ++z) {
        const auto& triple = frame.at(static_cast<std::size_t>(z));
        double* base = ske.data() + static_cast<int64_t>(t) * 3 * kJoints;
        base[z] = triple.at(0).get<double>();
        base[kJoints + z] = triple.at(1).get<double>();
        base[2 * kJoints + z] = triple.at(2).get<double>();
      }
    }

    entry.silhouette_frames = Tensor::from_data({sil_frames, h, w}, std::move(sil));
    entry.skeleton_joints = Tensor::from_data({ske_frames, 3, kJoints}, std::move(ske));
    dataset.entries.push_back(std::move(entry));
  }
  return dataset;
}

SilhouetteSequence to_silhouette(const DatasetEntry& entry) {
  return SilhouetteSequence{entry.silhouette_frames, entry.subject, entry.view, entry.condition};
}

SkeletonSequence to_skeleton(const DatasetEntry& entry) {
  return SkeletonSequence{entry.skeleton_joints, entry.subject, entry.view, entry.condition};
}

std::pair<SilhouetteSequence, SkeletonSequence> subsample(const DatasetEntry& entry,
                                                          const std::vector<int>& frames) {
  const Shape& ss = entry.silhouette_frames.shape();
  const int h = ss[1], w = ss[2];
  const int n = static_cast<int>(frames.size());
  std::vector<double> sil(static_cast<std::size_t>(n) * h * w);
  std::vector<double> ske(static_cast<std::size_t>(n) * 3 * kJoints);
  const auto& sil_src = entry.silhouette_frames.data();
  const auto& ske_src = entry.skeleton_joints.data();
  for (int i = 0; i < n; ++i) {
    const int t = frames[static_cast<std::size_t>(i)];
    if (t < 0 || t >= ss[0]) throw UsageError("subsample: frame index out of range");
    std::copy_n(sil_src.data() + static_cast<int64_t>(t) * h * w, h * w,
                sil.data() + static_cast<int64_t>(i) * h * w);
    std::copy_n(ske_src.data() + static_cast<int64_t>(t) * 3 * kJoints, 3 * kJoints,
                ske.data() + static_cast<int64_t>(i) * 3 * kJoints);
  }
  SilhouetteSequence s{Tensor::from_data({n, h, w}, std::move(sil)), entry.subject,
                       entry.view, entry.condition};
  SkeletonSequence k{Tensor::from_data({n, 3, kJoints}, std::move(ske)), entry.subject,
                     entry.view, entry.condition};
  return {std::move(s), std::move(k)};
}

}  // namespace msaff
