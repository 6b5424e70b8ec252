#pragma once

#include <string>
#include <vector>

#include "hdgcn/skeleton/topology.hpp"
#include "json.hpp"

namespace hdgcn::graph {

struct Decomposition {
  int com = 0;
  int num_joints = 0;
  std::vector<std::vector<int>> sets;  // H_1..H_{N_H}, 1-based joint ids

  std::size_t num_sets() const { return sets.size(); }
  std::size_t num_layers() const { return sets.empty() ? 0 : sets.size() - 1; }
  /// Joints of H_k and H_{k+1} for 0-based layer k.
  std::vector<int> layer_joints(std::size_t layer) const;
};

/// BFS layering from `com`. Explicit node sets registered on the topology for
/// that joint are used instead unless `use_explicit_sets` is false.
Decomposition decompose(const skeleton::Topology& topology, int com, bool use_explicit_sets = true);

enum class Variant { kPC, kFC };
/// kAlgorithm: s_cp[outer, inner] = 1. kSwapped: s_cp[inner, outer] = 1.
enum class Direction { kAlgorithm, kSwapped };
enum class NormScope { kPerSubset, kPooled };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

inline constexpr std::size_t kIdentity = 0;
inline constexpr std::size_t kCentripetal = 1;
inline constexpr std::size_t kCentrifugal = 2;

/// Dense (layers, 3, V, V) adjacency; entry [target, source]. The
/// conventional graph has a single layer.
struct Adjacency {
  std::size_t layers = 0;
  std::size_t joints = 0;
  bool normalized = false;
  std::vector<double> data;

  Adjacency() = default;
  Adjacency(std::size_t layers, std::size_t joints)
      : layers(layers), joints(joints), data(layers * 3 * joints * joints, 0.0) {}

  double& at(std::size_t l, std::size_t s, std::size_t i, std::size_t j) {
    return data[((l * 3 + s) * joints + i) * joints + j];
  }
  double at(std::size_t l, std::size_t s, std::size_t i, std::size_t j) const {
    return data[((l * 3 + s) * joints + i) * joints + j];
  }
  std::size_t nonzeros(std::size_t l, std::size_t s) const;
};

Adjacency build_hd(const skeleton::Topology& topology, const Decomposition& decomp, Variant variant,
                   Direction direction = Direction::kAlgorithm);
Adjacency build_conventional(const skeleton::Topology& topology);

/// Λ^{-1/2} A Λ^{-1/2} with Λ[n,n] = max(1, nonzeros in column n), per layer
/// and per subset, or with the column count pooled over the three subsets.
Adjacency normalize(const Adjacency& adj, NormScope scope = NormScope::kPerSubset);

nlohmann::json decomposition_json(const Decomposition& decomp);
std::string to_dot(const skeleton::Topology& topology, const Decomposition& decomp, const Adjacency& adj);

}  // namespace hdgcn::graph
