#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hdgcn/data/dataset.hpp"
#include "hdgcn/data/sequence.hpp"

namespace hdgcn::data {

/// Motion primitives animated on the ntu25 rest pose. Each one moves a
/// different part of the body: distal waves, shoulder swings, trunk bends,
/// leg kicks and head nods.
std::vector<std::string> synthetic_class_names();

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 25;
  /// Standard deviation of the additive coordinate noise, in metres.
  double noise = 0.03;
  std::uint64_t seed = 1;
  std::size_t min_frames = 32;
  std::size_t max_frames = 64;
  /// Largest random rotation about the vertical axis, radians.
  double max_yaw = 0.8;
  /// Every other primitive is mixed in with this probability, at a random
  /// fraction (up to distractor_scale) of its usual amplitude.
  double distractor_prob = 0.7;
  double distractor_scale = 0.6;
};

/// Sample `index` of `split` ("train" or "test"). Depends only on the spec
/// seed, the split and the index.
SkeletonSequence synthetic_sample(const SyntheticSpec& spec, const std::string& split, std::size_t index);

/// Label of sample `index`; samples cycle through the classes.
int synthetic_label(const SyntheticSpec& spec, std::size_t index);

struct SyntheticDataset {
  DatasetManifest train;
  DatasetManifest test;
};

/// Writes <out>/train/*.hds, <out>/test/*.hds and the manifests
/// <out>/train.json and <out>/test.json.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out);

/// Rest-pose coordinates of the ntu25 skeleton, (3, 25), metres.
std::vector<float> rest_pose();

}  // namespace hdgcn::data
