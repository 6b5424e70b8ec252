#include "hdgcn/data/sequence.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hdgcn/core/error.hpp"

namespace hdgcn::data {
namespace {

static_assert(std::endian::native == std::endian::little, "HDS1 I/O assumes a little-endian host");

constexpr std::uint8_t kVersion = 1;
constexpr std::uint16_t kNoLabel = 0xFFFF;

template <typename U>
void put(std::vector<char>& out, U v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

template <typename U>
U get(const std::vector<char>& bytes, std::size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw DataError("HDS1: truncated file");
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SkeletonSequence like(const SkeletonSequence& seq, std::size_t frames) {
  SkeletonSequence out;
  out.topology = seq.topology;
  out.persons = seq.persons;
  out.frames = frames;
  out.joints = seq.joints;
  out.label = seq.label;
  out.stream = seq.stream;
  out.data.assign(seq.persons * 3 * frames * seq.joints, 0.0f);
  return out;
}

}  // namespace

Stream parse_stream(std::string_view name) {
  if (name == "joint") return Stream::kJoint;
  if (name == "bone") return Stream::kBone;
  if (name == "joint_motion") return Stream::kJointMotion;
  if (name == "bone_motion") return Stream::kBoneMotion;
  throw ConfigError("unknown stream '" + std::string(name) + "' (joint, bone, joint_motion, bone_motion)");
}

std::string to_string(Stream stream) {
  switch (stream) {
    case Stream::kJoint: return "joint";
    case Stream::kBone: return "bone";
    case Stream::kJointMotion: return "joint_motion";
    case Stream::kBoneMotion: return "bone_motion";
  }
  return "joint";
}

void validate(const SkeletonSequence& seq) {
  if (seq.persons == 0 || seq.frames == 0 || seq.joints == 0) throw DataError("sequence has an empty dimension");
  if (seq.data.size() != seq.persons * 3 * seq.frames * seq.joints) {
    throw DataError("sequence data holds " + std::to_string(seq.data.size()) + " values, expected M*3*T*V = " +
                    std::to_string(seq.persons * 3 * seq.frames * seq.joints));
  }
  for (float v : seq.data) {
    if (!std::isfinite(v)) throw DataError("sequence contains non-finite coordinates");
  }
  if (seq.label && *seq.label < 0) throw DataError("negative label");
}

void validate(const SkeletonSequence& seq, const skeleton::Topology& topology) {
  validate(seq);
  if (seq.joints != static_cast<std::size_t>(topology.num_joints)) {
    throw DataError("sequence has " + std::to_string(seq.joints) + " joints, topology " + topology.name + " has " +
                    std::to_string(topology.num_joints));
  }
}

std::vector<char> encode_hds(const SkeletonSequence& seq) {
  validate(seq);
  if (seq.persons > 0xFFFF || seq.joints > 0xFFFF || seq.frames > 0xFFFFFFFFu) {
    throw DataError("HDS1: sequence dimensions exceed the header fields");
  }
  if (seq.label && *seq.label >= kNoLabel) throw DataError("HDS1: label out of range");
  if (seq.topology.size() > 0xFFFF) throw DataError("HDS1: topology name too long");
  std::vector<char> out{'H', 'D', 'S', '1'};
  out.reserve(32 + seq.topology.size() + seq.data.size() * 4);
  put(out, kVersion);
  put(out, static_cast<std::uint8_t>(seq.stream));
  put(out, static_cast<std::uint16_t>(seq.persons));
  put(out, static_cast<std::uint32_t>(seq.frames));
  put(out, static_cast<std::uint16_t>(seq.joints));
  put(out, static_cast<std::uint16_t>(seq.label ? *seq.label : kNoLabel));
  put(out, static_cast<std::uint16_t>(seq.topology.size()));
  out.insert(out.end(), seq.topology.begin(), seq.topology.end());
  const auto* p = reinterpret_cast<const char*>(seq.data.data());
  out.insert(out.end(), p, p + seq.data.size() * sizeof(float));
  return out;
}

SkeletonSequence decode_hds(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "HDS1", 4) != 0) throw DataError("HDS1: bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint8_t>(bytes, pos);
  if (version != kVersion) throw DataError("HDS1: unsupported version " + std::to_string(version));
  const auto stream = get<std::uint8_t>(bytes, pos);
  if (stream > 3) throw DataError("HDS1: unknown stream tag " + std::to_string(stream));
  SkeletonSequence seq;
  seq.stream = static_cast<Stream>(stream);
  seq.persons = get<std::uint16_t>(bytes, pos);
  seq.frames = get<std::uint32_t>(bytes, pos);
  seq.joints = get<std::uint16_t>(bytes, pos);
  const auto label = get<std::uint16_t>(bytes, pos);
  if (label != kNoLabel) seq.label = label;
  const auto name_len = get<std::uint16_t>(bytes, pos);
  if (pos + name_len > bytes.size()) throw DataError("HDS1: truncated file");
  seq.topology.assign(bytes.data() + pos, name_len);
  pos += name_len;
  const std::size_t count = seq.persons * 3 * seq.frames * seq.joints;
  if (bytes.size() - pos != count * sizeof(float)) {
    throw DataError("HDS1: payload holds " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                    std::to_string(count * sizeof(float)));
  }
  seq.data.resize(count);
  std::memcpy(seq.data.data(), bytes.data() + pos, count * sizeof(float));
  validate(seq);
  return seq;
}

void write_hds(const std::filesystem::path& path, const SkeletonSequence& seq) {
  const auto bytes = encode_hds(seq);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

SkeletonSequence read_hds(const std::filesystem::path& path) {
  try {
    return decode_hds(slurp(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const SkeletonSequence& seq) {
  validate(seq);
  nlohmann::json j;
  j["format"] = "HDS1";
  j["topology"] = seq.topology;
  j["stream"] = to_string(seq.stream);
  j["persons"] = seq.persons;
  j["frames"] = seq.frames;
  j["joints"] = seq.joints;
  j["label"] = seq.label ? nlohmann::json(*seq.label) : nlohmann::json(nullptr);
  j["data"] = seq.data;
  return j;
}

SkeletonSequence sequence_from_json(const nlohmann::json& j) {
  try {
    SkeletonSequence seq;
    seq.topology = j.at("topology").get<std::string>();
    seq.stream = parse_stream(j.value("stream", std::string("joint")));
    seq.persons = j.at("persons").get<std::size_t>();
    seq.frames = j.at("frames").get<std::size_t>();
    seq.joints = j.at("joints").get<std::size_t>();
    if (j.contains("label") && !j.at("label").is_null()) seq.label = j.at("label").get<int>();
    seq.data = j.at("data").get<std::vector<float>>();
    validate(seq);
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sequence JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
}

void write_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
  if (path.extension() == ".json") {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(seq).dump() << '\n';
    if (!out) throw DataError("write failed: " + path.string());
  } else {
    write_hds(path, seq);
  }
}

SkeletonSequence read_sequence(const std::filesystem::path& path) {
  if (path.extension() != ".json") return read_hds(path);
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return sequence_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

SkeletonSequence derive_bone(const SkeletonSequence& seq, const skeleton::Topology& topology, int com) {
  if (seq.stream != Stream::kJoint && seq.stream != Stream::kJointMotion) {
    throw DataError("derive_bone expects a joint stream, got " + to_string(seq.stream));
  }
  validate(seq, topology);
  const auto parent = skeleton::parent_map(topology, com);
  SkeletonSequence out = like(seq, seq.frames);
  out.stream = seq.stream == Stream::kJoint ? Stream::kBone : Stream::kBoneMotion;
  for (std::size_t m = 0; m < seq.persons; ++m) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < seq.frames; ++t) {
        for (std::size_t v = 0; v < seq.joints; ++v) {
          const auto p = static_cast<std::size_t>(parent[v] - 1);
          out.at(m, c, t, v) = p == v ? 0.0f : seq.at(m, c, t, v) - seq.at(m, c, t, p);
        }
      }
    }
  }
  return out;
}

SkeletonSequence derive_motion(const SkeletonSequence& seq) {
  if (seq.stream != Stream::kJoint && seq.stream != Stream::kBone) {
    throw DataError("derive_motion expects a joint or bone stream, got " + to_string(seq.stream));
  }
  validate(seq);
  if (seq.frames < 2) throw DataError("derive_motion needs at least 2 frames");
  SkeletonSequence out = like(seq, seq.frames);
  out.stream = seq.stream == Stream::kJoint ? Stream::kJointMotion : Stream::kBoneMotion;
  for (std::size_t m = 0; m < seq.persons; ++m) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t + 1 < seq.frames; ++t) {
        for (std::size_t v = 0; v < seq.joints; ++v) out.at(m, c, t, v) = seq.at(m, c, t + 1, v) - seq.at(m, c, t, v);
      }
    }
  }
  return out;
}

SkeletonSequence derive_stream(const SkeletonSequence& joint, Stream target, const skeleton::Topology& topology,
                               int com) {
  if (joint.stream != Stream::kJoint) throw DataError("derive_stream expects joint input");
  switch (target) {
    case Stream::kJoint: return joint;
    case Stream::kBone: return derive_bone(joint, topology, com);
    case Stream::kJointMotion: return derive_motion(joint);
    case Stream::kBoneMotion: return derive_motion(derive_bone(joint, topology, com));
  }
  return joint;
}

SkeletonSequence apply_synthetic_rules(const SkeletonSequence& seq, const skeleton::Topology& topology) {
  const auto total = static_cast<std::size_t>(topology.num_joints);
  if (seq.joints == total || topology.synthetic_rules.empty()) return seq;
  const std::size_t base = total - topology.synthetic_rules.size();
  if (seq.joints != base) {
    throw DataError("sequence has " + std::to_string(seq.joints) + " joints; topology " + topology.name +
                    " expects " + std::to_string(base) + " or " + std::to_string(total));
  }
  if (seq.stream != Stream::kJoint) throw DataError("synthetic joints are derived from joint streams only");
  SkeletonSequence out;
  out.topology = topology.name;
  out.persons = seq.persons;
  out.frames = seq.frames;
  out.joints = total;
  out.label = seq.label;
  out.stream = seq.stream;
  out.data.assign(seq.persons * 3 * seq.frames * total, 0.0f);
  for (std::size_t m = 0; m < seq.persons; ++m) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t t = 0; t < seq.frames; ++t) {
        for (std::size_t v = 0; v < base; ++v) out.at(m, c, t, v) = seq.at(m, c, t, v);
        // Rules may refer to earlier synthetic joints, so apply in order.
        for (const auto& rule : topology.synthetic_rules) {
          out.at(m, c, t, rule.joint - 1) =
              0.5f * (out.at(m, c, t, rule.a - 1) + out.at(m, c, t, rule.b - 1));
        }
      }
    }
  }
  return out;
}

SkeletonSequence preprocess(const SkeletonSequence& seq, int com, const PreprocessOptions& options,
                            std::mt19937_64* crop_rng) {
  validate(seq);
  if (options.window == 0) throw ConfigError("preprocess window must be positive");
  if (com < 1 || static_cast<std::size_t>(com) > seq.joints) {
    throw DataError("CoM joint " + std::to_string(com) + " outside 1.." + std::to_string(seq.joints));
  }
  std::size_t first = 0;
  std::size_t span = seq.frames;
  if (crop_rng != nullptr && options.crop_min_fraction < 1.0 && seq.frames > 1) {
    const auto min_span = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.crop_min_fraction * static_cast<double>(seq.frames))));
    span = std::uniform_int_distribution<std::size_t>(min_span, seq.frames)(*crop_rng);
    first = std::uniform_int_distribution<std::size_t>(0, seq.frames - span)(*crop_rng);
  }

  const std::size_t window = options.window;
  SkeletonSequence out = like(seq, window);
  const bool centered = seq.stream == Stream::kJoint;
  const auto v0 = static_cast<std::size_t>(com - 1);
  for (std::size_t m = 0; m < seq.persons; ++m) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float origin = centered ? seq.at(0, c, first, v0) : 0.0f;
      for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t v = 0; v < seq.joints; ++v) {
          float value;
          if (span == window) {
            value = seq.at(m, c, first + t, v);
          } else if (options.temporal == Temporal::kLoopPad && span < window) {
            value = seq.at(m, c, first + t % span, v);
          } else if (window == 1 || span == 1) {
            value = seq.at(m, c, first, v);
          } else {
            const double pos = static_cast<double>(t) * static_cast<double>(span - 1) / static_cast<double>(window - 1);
            const auto lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, span - 1);
            const double w = pos - static_cast<double>(lo);
            value = static_cast<float>((1.0 - w) * seq.at(m, c, first + lo, v) + w * seq.at(m, c, first + hi, v));
          }
          out.at(m, c, t, v) = value - origin;
        }
      }
    }
  }
  return out;
}

}  // namespace hdgcn::data
