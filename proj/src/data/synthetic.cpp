#include "hdgcn/data/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>

#include "hdgcn/core/error.hpp"

namespace hdgcn::data {
namespace {

using Vec3 = std::array<double, 3>;

constexpr std::size_t kJoints = 25;

// x to the subject's left, y up, z forward.
constexpr std::array<Vec3, kJoints> kRest{{
    {0.00, 1.00, 0.00},   // 1 spine base
    {0.00, 1.25, 0.00},   // 2 spine mid
    {0.00, 1.55, 0.00},   // 3 neck
    {0.00, 1.70, 0.02},   // 4 head
    {0.18, 1.48, 0.00},   // 5 left shoulder
    {0.21, 1.20, 0.00},   // 6 left elbow
    {0.23, 0.96, 0.02},   // 7 left wrist
    {0.23, 0.89, 0.03},   // 8 left hand
    {-0.18, 1.48, 0.00},  // 9 right shoulder
    {-0.21, 1.20, 0.00},  // 10 right elbow
    {-0.23, 0.96, 0.02},  // 11 right wrist
    {-0.23, 0.89, 0.03},  // 12 right hand
    {0.10, 0.96, 0.00},   // 13 left hip
    {0.11, 0.53, 0.01},   // 14 left knee
    {0.11, 0.10, 0.00},   // 15 left ankle
    {0.11, 0.04, 0.10},   // 16 left foot
    {-0.10, 0.96, 0.00},  // 17 right hip
    {-0.11, 0.53, 0.01},  // 18 right knee
    {-0.11, 0.10, 0.00},  // 19 right ankle
    {-0.11, 0.04, 0.10},  // 20 right foot
    {0.00, 1.48, 0.00},   // 21 spine shoulder
    {0.23, 0.81, 0.04},   // 22 left hand tip
    {0.20, 0.88, 0.06},   // 23 left thumb
    {-0.23, 0.81, 0.04},  // 24 right hand tip
    {-0.20, 0.88, 0.06},  // 25 right thumb
}};

const std::array<const char*, 8> kClassNames{"wave_right", "wave_left", "raise_right", "raise_left",
                                             "bow",        "kick_right", "kick_left", "nod"};

// Joints strictly below `pivot` in the tree rooted at the spine base.
std::vector<std::size_t> descendants(const std::vector<int>& parent, int pivot) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < parent.size(); ++v) {
    int u = static_cast<int>(v) + 1;
    while (parent[u - 1] != u) {
      u = parent[u - 1];
      if (u == pivot) {
        out.push_back(v);
        break;
      }
    }
  }
  return out;
}

void rotate(std::vector<Vec3>& pose, const std::vector<std::size_t>& subtree, std::size_t pivot, int axis,
            double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  const Vec3 o = pose[pivot];
  for (auto v : subtree) {
    const double pa = pose[v][a] - o[a];
    const double pb = pose[v][b] - o[b];
    pose[v][a] = o[a] + c * pa - s * pb;
    pose[v][b] = o[b] + s * pa + c * pb;
  }
}

struct Joint {
  std::size_t index;  // 0-based
  std::vector<std::size_t> subtree;
};

struct Rig {
  Joint elbow_r, elbow_l, shoulder_r, shoulder_l, spine_mid, hip_r, hip_l, knee_r, knee_l, neck;
};

const Rig& rig() {
  static const Rig r = [] {
    const auto topo = skeleton::builtin("ntu25");
    const auto parent = skeleton::parent_map(topo, 1);
    auto joint = [&](int id) { return Joint{static_cast<std::size_t>(id - 1), descendants(parent, id)}; };
    return Rig{joint(10), joint(6), joint(9), joint(5), joint(2), joint(17), joint(13), joint(18), joint(14), joint(3)};
  }();
  return r;
}

struct Motion {
  double amplitude;
  double cycles;
  double phase;
  double tonic;  // class-specific static offset, e.g. arm held out for waving
};

// Angle sequences are applied distal first so later, proximal rotations carry
// the already-moved distal joints along.
void animate(std::vector<Vec3>& pose, int label, const Motion& m, double u) {
  const auto& r = rig();
  const double w = 2.0 * std::numbers::pi * m.cycles * u + m.phase;
  const double osc = std::sin(w);
  const double lift = 0.5 * (1.0 - std::cos(w));
  constexpr int kX = 0;
  constexpr int kZ = 2;
  switch (label) {
    case 0:
      rotate(pose, r.elbow_r.subtree, r.elbow_r.index, kZ, -(0.9 + m.amplitude * osc));
      rotate(pose, r.shoulder_r.subtree, r.shoulder_r.index, kZ, -m.tonic);
      break;
    case 1:
      rotate(pose, r.elbow_l.subtree, r.elbow_l.index, kZ, 0.9 + m.amplitude * osc);
      rotate(pose, r.shoulder_l.subtree, r.shoulder_l.index, kZ, m.tonic);
      break;
    case 2: rotate(pose, r.shoulder_r.subtree, r.shoulder_r.index, kX, -m.amplitude * lift); break;
    case 3: rotate(pose, r.shoulder_l.subtree, r.shoulder_l.index, kX, -m.amplitude * lift); break;
    case 4: rotate(pose, r.spine_mid.subtree, r.spine_mid.index, kX, m.amplitude * lift); break;
    case 5:
      rotate(pose, r.knee_r.subtree, r.knee_r.index, kX, 0.6 * m.amplitude * lift);
      rotate(pose, r.hip_r.subtree, r.hip_r.index, kX, -m.amplitude * lift);
      break;
    case 6:
      rotate(pose, r.knee_l.subtree, r.knee_l.index, kX, 0.6 * m.amplitude * lift);
      rotate(pose, r.hip_l.subtree, r.hip_l.index, kX, -m.amplitude * lift);
      break;
    case 7: rotate(pose, r.neck.subtree, r.neck.index, kX, m.amplitude * osc); break;
    default: break;
  }
}

// Distal primitives first, then proximal ones.
constexpr std::array<int, 8> kApplyOrder{0, 1, 7, 5, 6, 2, 3, 4};

// Amplitude ranges per class, radians.
constexpr std::array<std::array<double, 2>, 8> kAmplitude{{
    {0.5, 0.9}, {0.5, 0.9}, {1.4, 2.4}, {1.4, 2.4}, {0.4, 0.9}, {0.6, 1.2}, {0.6, 1.2}, {0.3, 0.6}}};

}  // namespace

std::vector<std::string> synthetic_class_names() { return {kClassNames.begin(), kClassNames.end()}; }

std::vector<float> rest_pose() {
  std::vector<float> out(3 * kJoints);
  for (std::size_t v = 0; v < kJoints; ++v) {
    for (std::size_t c = 0; c < 3; ++c) out[c * kJoints + v] = static_cast<float>(kRest[v][c]);
  }
  return out;
}

int synthetic_label(const SyntheticSpec& spec, std::size_t index) {
  return static_cast<int>(index % spec.classes);
}

SkeletonSequence synthetic_sample(const SyntheticSpec& spec, const std::string& split, std::size_t index) {
  if (spec.classes < 2 || spec.classes > kClassNames.size()) {
    throw ConfigError("synthetic class count must be in 2.." + std::to_string(kClassNames.size()));
  }
  if (spec.min_frames < 2 || spec.max_frames < spec.min_frames) throw ConfigError("invalid synthetic frame range");
  if (!(spec.noise >= 0.0)) throw ConfigError("synthetic noise must be non-negative");
  const std::uint32_t split_id = split == "train" ? 0u : split == "test" ? 1u : 2u;
  std::seed_seq seq_seed{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), split_id,
                         static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int label = synthetic_label(spec, index);
  const auto frames = std::uniform_int_distribution<std::size_t>(spec.min_frames, spec.max_frames)(rng);
  std::array<std::optional<Motion>, 8> motions;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto& range = kAmplitude[c];
    Motion m{uniform(range[0], range[1]), uniform(1.0, 2.0), uniform(0.0, 2.0 * std::numbers::pi),
             uniform(1.1, 1.5)};
    const double gate = unit(rng);
    const double scale = spec.distractor_scale * unit(rng);
    if (static_cast<int>(c) == label) {
      motions[c] = m;
    } else if (gate < spec.distractor_prob) {
      m.amplitude *= scale;
      m.tonic *= scale;
      motions[c] = m;
    }
  }
  const double yaw = uniform(-spec.max_yaw, spec.max_yaw);
  const Vec3 offset{uniform(-0.5, 0.5), 0.0, uniform(-0.5, 0.5)};
  const Vec3 drift{uniform(-0.2, 0.2), 0.0, uniform(-0.2, 0.2)};
  std::normal_distribution<double> noise(0.0, 1.0);

  SkeletonSequence out;
  out.topology = "ntu25";
  out.persons = 1;
  out.frames = frames;
  out.joints = kJoints;
  out.label = label;
  out.data.assign(3 * frames * kJoints, 0.0f);
  const double cy = std::cos(yaw);
  const double sy = std::sin(yaw);
  for (std::size_t t = 0; t < frames; ++t) {
    const double u = static_cast<double>(t) / static_cast<double>(frames - 1);
    std::vector<Vec3> pose(kRest.begin(), kRest.end());
    for (int c : kApplyOrder) {
      if (motions[static_cast<std::size_t>(c)]) animate(pose, c, *motions[static_cast<std::size_t>(c)], u);
    }
    for (std::size_t v = 0; v < kJoints; ++v) {
      const auto& p = pose[v];
      const Vec3 q{cy * p[0] + sy * p[2] + offset[0] + u * drift[0], p[1],
                   -sy * p[0] + cy * p[2] + offset[2] + u * drift[2]};
      for (std::size_t c = 0; c < 3; ++c) {
        const double n = spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0;
        out.at(0, c, t, v) = static_cast<float>(q[c] + n);
      }
    }
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out) {
  SyntheticDataset result;
  const auto names = synthetic_class_names();
  const std::vector<std::string> classes(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(spec.classes));
  for (auto* m : {&result.train, &result.test}) {
    const bool train = m == &result.train;
    m->split = train ? "train" : "test";
    m->name = "synthetic-" + m->split;
    m->class_names = classes;
    m->seed = spec.seed;
    m->root = out;
    std::filesystem::create_directories(out / m->split);
    const std::size_t count = spec.classes * (train ? spec.train_per_class : spec.test_per_class);
    for (std::size_t i = 0; i < count; ++i) {
      char file[32];
      std::snprintf(file, sizeof file, "%06zu.hds", i);
      const std::string rel = m->split + "/" + file;
      const auto seq = synthetic_sample(spec, m->split, i);
      write_hds(out / rel, seq);
      m->samples.push_back({rel, *seq.label});
    }
    write_manifest(out / (m->split + ".json"), *m);
  }
  return result;
}

}  // namespace hdgcn::data
