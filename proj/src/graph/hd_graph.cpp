#include "hdgcn/graph/hd_graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hdgcn/core/error.hpp"

namespace hdgcn::graph {

std::vector<int> Decomposition::layer_joints(std::size_t layer) const {
  std::vector<int> out = sets.at(layer);
  out.insert(out.end(), sets.at(layer + 1).begin(), sets.at(layer + 1).end());
  return out;
}

Decomposition decompose(const skeleton::Topology& topology, int com, bool use_explicit_sets) {
  if (com < 1 || com > topology.num_joints) {
    throw ConfigError("decompose: joint " + std::to_string(com) + " is not in " + topology.name);
  }
  Decomposition d;
  d.com = com;
  d.num_joints = topology.num_joints;
  if (auto it = topology.hierarchy_sets.find(com); use_explicit_sets && it != topology.hierarchy_sets.end()) {
    d.sets = it->second;
    return d;
  }
  const auto depth = skeleton::bfs_depth(topology, com);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i] < 0) throw InternalError("decompose: joint " + std::to_string(i + 1) + " unreachable");
    const auto k = static_cast<std::size_t>(depth[i]);
    if (d.sets.size() <= k) d.sets.resize(k + 1);
    d.sets[k].push_back(static_cast<int>(i) + 1);
  }
  return d;
}

Variant parse_variant(const std::string& name) {
  if (name == "pc" || name == "PC") return Variant::kPC;
  if (name == "fc" || name == "FC") return Variant::kFC;
  throw ConfigError("unknown graph variant '" + name + "' (expected pc or fc)");
}

std::string to_string(Variant v) { return v == Variant::kPC ? "pc" : "fc"; }

std::size_t Adjacency::nonzeros(std::size_t l, std::size_t s) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < joints * joints; ++i) n += data[(l * 3 + s) * joints * joints + i] != 0.0;
  return n;
}

Adjacency build_hd(const skeleton::Topology& topology, const Decomposition& decomp, Variant variant,
                   Direction direction) {
  if (decomp.num_joints != topology.num_joints) throw DimensionError("build_hd: decomposition/topology mismatch");
  if (decomp.num_layers() == 0) throw ConfigError("build_hd: need at least two hierarchy sets");
  const auto v = static_cast<std::size_t>(topology.num_joints);
  Adjacency adj(decomp.num_layers(), v);
  std::set<std::pair<int, int>> pc;
  for (auto [c, p] : topology.edges) {
    pc.insert({c, p});
    pc.insert({p, c});
  }
  for (std::size_t l = 0; l < adj.layers; ++l) {
    const auto& inner = decomp.sets[l];
    const auto& outer = decomp.sets[l + 1];
    for (int j : decomp.layer_joints(l)) adj.at(l, kIdentity, j - 1, j - 1) = 1.0;
    for (int i : inner) {
      for (int j : outer) {
        if (variant == Variant::kPC && !pc.count({i, j})) continue;
        const auto a = static_cast<std::size_t>(i - 1);
        const auto b = static_cast<std::size_t>(j - 1);
        if (direction == Direction::kAlgorithm) {
          adj.at(l, kCentripetal, b, a) = 1.0;
          adj.at(l, kCentrifugal, a, b) = 1.0;
        } else {
          adj.at(l, kCentripetal, a, b) = 1.0;
          adj.at(l, kCentrifugal, b, a) = 1.0;
        }
      }
    }
  }
  return adj;
}

Adjacency build_conventional(const skeleton::Topology& topology) {
  const auto v = static_cast<std::size_t>(topology.num_joints);
  Adjacency adj(1, v);
  for (std::size_t i = 0; i < v; ++i) adj.at(0, kIdentity, i, i) = 1.0;
  for (auto [c, p] : topology.edges) {
    adj.at(0, kCentripetal, c - 1, p - 1) = 1.0;
    adj.at(0, kCentrifugal, p - 1, c - 1) = 1.0;
  }
  return adj;
}

Adjacency normalize(const Adjacency& adj, NormScope scope) {
  if (adj.normalized) throw ConfigError("normalize: adjacency is already normalized");
  Adjacency out = adj;
  out.normalized = true;
  const std::size_t v = adj.joints;
  std::vector<double> degree(v);
  for (std::size_t l = 0; l < adj.layers; ++l) {
    if (scope == NormScope::kPooled) {
      std::fill(degree.begin(), degree.end(), 0.0);
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < v; ++i)
          for (std::size_t j = 0; j < v; ++j) degree[j] += adj.at(l, s, i, j) != 0.0;
    }
    for (std::size_t s = 0; s < 3; ++s) {
      if (scope == NormScope::kPerSubset) {
        std::fill(degree.begin(), degree.end(), 0.0);
        for (std::size_t i = 0; i < v; ++i)
          for (std::size_t j = 0; j < v; ++j) degree[j] += adj.at(l, s, i, j) != 0.0;
      }
      for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t j = 0; j < v; ++j) {
          const double a = adj.at(l, s, i, j);
          if (a == 0.0) continue;
          out.at(l, s, i, j) = a / std::sqrt(std::max(1.0, degree[i]) * std::max(1.0, degree[j]));
        }
      }
    }
  }
  return out;
}

nlohmann::json decomposition_json(const Decomposition& decomp) {
  nlohmann::json j;
  j["com"] = decomp.com;
  j["num_sets"] = decomp.num_sets();
  j["num_layers"] = decomp.num_layers();
  j["sets"] = decomp.sets;
  return j;
}

std::string to_dot(const skeleton::Topology& topology, const Decomposition& decomp, const Adjacency& adj) {
  std::ostringstream out;
  out << "digraph \"" << topology.name << "\" {\n  rankdir=TB;\n";
  for (std::size_t k = 0; k < decomp.sets.size(); ++k) {
    out << "  subgraph cluster_H" << k + 1 << " {\n    label=\"H" << k + 1 << "\";\n    rank=same;\n";
    for (int j : decomp.sets[k]) {
      out << "    " << j;
      if (!topology.joint_names.empty()) out << " [label=\"" << j << " " << topology.joint_names[j - 1] << "\"]";
      out << ";\n";
    }
    out << "  }\n";
  }
  std::set<std::pair<int, int>> pc;
  for (auto [c, p] : topology.edges) pc.insert({std::min(c, p), std::max(c, p)});
  // One arrow per centripetal entry, drawn source -> target.
  for (std::size_t l = 0; l < adj.layers; ++l) {
    for (std::size_t i = 0; i < adj.joints; ++i) {
      for (std::size_t j = 0; j < adj.joints; ++j) {
        if (adj.at(l, kCentripetal, i, j) == 0.0) continue;
        const int a = static_cast<int>(j) + 1;
        const int b = static_cast<int>(i) + 1;
        const bool physical = pc.count({std::min(a, b), std::max(a, b)}) > 0;
        out << "  " << a << " -> " << b << " [layer=" << l + 1 << ", kind=" << (physical ? "pc" : "fc")
            << ", color=" << (physical ? "blue" : "red") << "];\n";
      }
    }
  }
  out << "}\n";
  return out.str();
}

}  // namespace hdgcn::graph
