#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hdgcn/skeleton/topology.hpp"
#include "json.hpp"

namespace hdgcn::data {

enum class Stream : std::uint8_t { kJoint = 0, kBone = 1, kJointMotion = 2, kBoneMotion = 3 };

Stream parse_stream(std::string_view name);
std::string to_string(Stream stream);

/// Coordinates in (M, 3, T, V) order.
struct SkeletonSequence {
  std::string topology;
  std::size_t persons = 1;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<float> data;
  std::optional<int> label;
  Stream stream = Stream::kJoint;

  float& at(std::size_t m, std::size_t c, std::size_t t, std::size_t v) {
    return data[((m * 3 + c) * frames + t) * joints + v];
  }
  float at(std::size_t m, std::size_t c, std::size_t t, std::size_t v) const {
    return data[((m * 3 + c) * frames + t) * joints + v];
  }
};

/// Throws DataError on a size mismatch or non-finite coordinates.
void validate(const SkeletonSequence& seq);
/// Additionally checks V against the topology.
void validate(const SkeletonSequence& seq, const skeleton::Topology& topology);

// HDS1: "HDS1", u8 version, u8 stream, u16 M, u32 T, u16 V, u16 label
// (0xFFFF = none), u16 name length, name bytes, f32 values. Little-endian.
std::vector<char> encode_hds(const SkeletonSequence& seq);
SkeletonSequence decode_hds(const std::vector<char>& bytes);
void write_hds(const std::filesystem::path& path, const SkeletonSequence& seq);
SkeletonSequence read_hds(const std::filesystem::path& path);

nlohmann::json to_json(const SkeletonSequence& seq);
SkeletonSequence sequence_from_json(const nlohmann::json& j);

/// Dispatches on the extension: ".json" or anything else as HDS1.
void write_sequence(const std::filesystem::path& path, const SkeletonSequence& seq);
SkeletonSequence read_sequence(const std::filesystem::path& path);

/// bone[v] = joint[v] - joint[parent(v)] with the tree rooted at `com`;
/// bone[com] = 0. Accepts joint and joint-motion input.
SkeletonSequence derive_bone(const SkeletonSequence& seq, const skeleton::Topology& topology, int com);

/// x[t+1] - x[t], last frame zero.
SkeletonSequence derive_motion(const SkeletonSequence& seq);

/// Joint input to any stream.
SkeletonSequence derive_stream(const SkeletonSequence& joint, Stream target, const skeleton::Topology& topology,
                               int com);

/// Appends the topology's synthetic joints (midpoints) when the sequence has
/// exactly the base joint count. No-op if the joints are already present.
SkeletonSequence apply_synthetic_rules(const SkeletonSequence& seq, const skeleton::Topology& topology);

enum class Temporal { kResample, kLoopPad };

struct PreprocessOptions {
  std::size_t window = 64;
  Temporal temporal = Temporal::kResample;
  /// Training only: keep a random contiguous span of at least this fraction
  /// of the frames before resampling. 1 disables cropping.
  double crop_min_fraction = 1.0;
};

/// Centers every frame on the CoM joint of frame 1 (person 1) and brings the
/// sequence to exactly `window` frames.
SkeletonSequence preprocess(const SkeletonSequence& seq, int com, const PreprocessOptions& options,
                            std::mt19937_64* crop_rng = nullptr);

}  // namespace hdgcn::data
