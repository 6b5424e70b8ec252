#include "hdgcn/data/dataset.hpp"

#include <fstream>

#include "hdgcn/core/error.hpp"

namespace hdgcn::data {

std::filesystem::path DatasetManifest::path_of(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.file);
  return p.is_absolute() ? p : root / p;
}

nlohmann::json to_json(const DatasetManifest& manifest) {
  nlohmann::json j;
  j["name"] = manifest.name;
  j["classes"] = manifest.class_names;
  j["split"] = manifest.split;
  j["seed"] = manifest.seed ? nlohmann::json(*manifest.seed) : nlohmann::json(nullptr);
  auto& samples = j["samples"] = nlohmann::json::array();
  for (const auto& s : manifest.samples) samples.push_back({{"file", s.file}, {"label", s.label}});
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  try {
    DatasetManifest m;
    m.name = j.value("name", std::string());
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    m.split = j.value("split", std::string("train"));
    if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("samples")) m.samples.push_back({s.at("file").get<std::string>(), s.at("label").get<int>()});
    m.root = root;
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(manifest).dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

void validate(const DatasetManifest& manifest) {
  if (manifest.class_names.empty()) throw DataError("manifest has no classes");
  for (const auto& s : manifest.samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= manifest.class_names.size()) {
      throw DataError("manifest entry " + s.file + ": label " + std::to_string(s.label) + " outside the class list");
    }
    const auto path = manifest.path_of(s);
    if (!std::filesystem::exists(path)) throw DataError("manifest entry " + s.file + " does not exist");
    read_sequence(path);
  }
}

SkeletonSequence prepare_sample(const SkeletonSequence& raw, const skeleton::Topology& topology,
                                const LoadOptions& options, std::mt19937_64* crop_rng) {
  auto seq = apply_synthetic_rules(raw, topology);
  validate(seq, topology);
  if (seq.stream != Stream::kJoint) {
    if (seq.stream != options.stream) {
      throw DataError("sample holds the " + to_string(seq.stream) + " stream; " + to_string(options.stream) +
                      " can only be derived from joints");
    }
    return preprocess(seq, options.com, options.preprocess, crop_rng);
  }
  seq = preprocess(seq, options.com, options.preprocess, crop_rng);
  return derive_stream(seq, options.stream, topology, options.com);
}

Dataset load_dataset(const DatasetManifest& manifest, const skeleton::Topology& topology, const LoadOptions& options) {
  Dataset ds;
  ds.num_classes = manifest.class_names.size();
  std::size_t persons = options.persons;
  for (const auto& entry : manifest.samples) {
    if (entry.label < 0 || static_cast<std::size_t>(entry.label) >= ds.num_classes) {
      throw DataError("manifest entry " + entry.file + ": label outside the class list");
    }
    SkeletonSequence seq;
    try {
      seq = prepare_sample(read_sequence(manifest.path_of(entry)), topology, options);
    } catch (const DataError& e) {
      throw DataError("manifest entry " + entry.file + ": " + e.what());
    }
    if (persons == 0) persons = seq.persons;
    if (ds.sample_shape.empty()) ds.sample_shape = {persons, 3, seq.frames, seq.joints};
    const std::size_t block = 3 * seq.frames * seq.joints;
    const std::size_t start = ds.values.size();
    ds.values.resize(start + persons * block, 0.0f);
    const std::size_t keep = std::min(persons, seq.persons);
    std::copy(seq.data.begin(), seq.data.begin() + static_cast<std::ptrdiff_t>(keep * block),
              ds.values.begin() + static_cast<std::ptrdiff_t>(start));
    ds.labels.push_back(entry.label);
  }
  if (ds.labels.empty()) throw DataError("dataset " + manifest.name + " is empty");
  return ds;
}

}  // namespace hdgcn::data
