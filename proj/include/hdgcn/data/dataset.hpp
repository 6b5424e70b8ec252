#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdgcn/core/shape.hpp"
#include "hdgcn/data/sequence.hpp"
#include "json.hpp"

namespace hdgcn::data {

struct ManifestEntry {
  std::string file;  // relative to the manifest directory unless absolute
  int label = 0;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> samples;
  std::string split = "train";
  std::optional<std::uint64_t> seed;
  /// Directory the relative sample paths resolve against. Not serialized.
  std::filesystem::path root;

  std::filesystem::path path_of(const ManifestEntry& entry) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Checks labels against the class list and that every file exists and
/// parses. Throws DataError naming the first bad entry.
void validate(const DatasetManifest& manifest);

/// Samples stacked into one array of (M, C, T, V) blocks, ready for a model.
struct Dataset {
  Shape sample_shape;
  std::vector<float> values;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_numel() const { return numel(sample_shape); }
  const float* sample(std::size_t i) const { return values.data() + i * sample_numel(); }
};

struct LoadOptions {
  Stream stream = Stream::kJoint;
  int com = 1;
  PreprocessOptions preprocess;
  /// Sequences with fewer persons are zero-padded, more are truncated.
  std::size_t persons = 0;  // 0: use the first sample's count
};

/// Reads every sample, adds synthetic joints, preprocesses the joint stream
/// and derives the requested stream.
Dataset load_dataset(const DatasetManifest& manifest, const skeleton::Topology& topology, const LoadOptions& options);

/// Same transform for one raw joint sequence.
SkeletonSequence prepare_sample(const SkeletonSequence& raw, const skeleton::Topology& topology,
                                const LoadOptions& options, std::mt19937_64* crop_rng = nullptr);

}  // namespace hdgcn::data
