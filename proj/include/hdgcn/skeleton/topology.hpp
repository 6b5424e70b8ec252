#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace hdgcn::skeleton {

enum class ComRole { kChest, kBelly, kHip };

ComRole parse_com_role(std::string_view name);
std::string to_string(ComRole role);

/// A joint appended to a skeleton as the midpoint of two existing joints.
struct SyntheticJointRule {
  int joint = 0;
  int a = 0;
  int b = 0;
};

/// Joint ids are 1-based throughout. Edges are inward (child, parent) pairs.
struct Topology {
  std::string name;
  int num_joints = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> joint_names;
  std::map<ComRole, int> com_candidates;
  std::vector<SyntheticJointRule> synthetic_rules;
  // Hierarchy node sets given explicitly for a CoM joint. When present they
  // take precedence over the BFS layering.
  std::map<int, std::vector<std::vector<int>>> hierarchy_sets;

  int com_joint(ComRole role) const;
  /// Undirected neighbor lists, index v-1, neighbors sorted ascending.
  std::vector<std::vector<int>> neighbors() const;
};

/// Throws TopologyError naming the first violated invariant.
void validate(const Topology& topology);

/// ntu25, kinetics18, kinetics20 or toy5.
Topology builtin(std::string_view name);
std::vector<std::string> builtin_names();
/// A builtin name or a path to a topology JSON file.
Topology resolve(const std::string& name_or_path);

Topology from_json(const nlohmann::json& j);
nlohmann::json to_json(const Topology& topology);
Topology load(const std::filesystem::path& path);

/// Adds a hip joint between the two hips and a belly joint between the neck
/// and that hip, rewiring the torso so the result stays a tree.
Topology extend_kinetics(const Topology& base);

/// Renames joint v to perm[v-1]; perm is a permutation of 1..V.
Topology relabel(const Topology& topology, const std::vector<int>& perm);

/// parent[v-1] for the PC tree oriented away from `com`; parent of com is com.
std::vector<int> parent_map(const Topology& topology, int com);

/// BFS distance of every joint from `com` over PC edges, index v-1.
std::vector<int> bfs_depth(const Topology& topology, int com);

}  // namespace hdgcn::skeleton
