#include "hdgcn/skeleton/topology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>

#include "hdgcn/core/error.hpp"

namespace hdgcn::skeleton {
namespace {

Topology make_ntu25() {
  Topology t;
  t.name = "ntu25";
  t.num_joints = 25;
  t.edges = {{1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},
             {9, 21},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
             {17, 1},  {18, 17}, {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};
  t.joint_names = {"spine_base",     "spine_mid",   "neck",        "head",         "left_shoulder",
                   "left_elbow",     "left_wrist",  "left_hand",   "right_shoulder", "right_elbow",
                   "right_wrist",    "right_hand",  "left_hip",    "left_knee",    "left_ankle",
                   "left_foot",      "right_hip",   "right_knee",  "right_ankle",  "right_foot",
                   "spine_shoulder", "left_hand_tip", "left_thumb", "right_hand_tip", "right_thumb"};
  t.com_candidates = {{ComRole::kChest, 21}, {ComRole::kBelly, 2}, {ComRole::kHip, 1}};
  // The published node sets for the belly root put both hand tips and both
  // thumbs in the outermost set, which plain BFS over the edge list does not.
  t.hierarchy_sets[2] = {{2}, {1, 21}, {13, 17, 3, 5, 9}, {14, 18, 4, 6, 10}, {15, 19, 7, 11}, {16, 20, 8, 12},
                         {22, 23, 24, 25}};
  return t;
}

// OpenPose 18-joint layout.
Topology make_kinetics18() {
  Topology t;
  t.name = "kinetics18";
  t.num_joints = 18;
  t.edges = {{5, 4},   {4, 3},  {8, 7},  {7, 6}, {14, 13}, {13, 12}, {11, 10}, {10, 9}, {12, 6},
             {9, 3},   {6, 2},  {3, 2},  {1, 2}, {16, 1},  {15, 1},  {18, 16}, {17, 15}};
  t.joint_names = {"nose",      "neck",       "right_shoulder", "right_elbow", "right_wrist", "left_shoulder",
                   "left_elbow", "left_wrist", "right_hip",      "right_knee",  "right_ankle", "left_hip",
                   "left_knee", "left_ankle", "right_eye",      "left_eye",    "right_ear",   "left_ear"};
  t.com_candidates = {{ComRole::kChest, 2}};
  return t;
}

// Five-joint chain used by micro models and tests.
Topology make_toy5() {
  Topology t;
  t.name = "toy5";
  t.num_joints = 5;
  t.edges = {{2, 1}, {3, 1}, {4, 2}, {5, 3}};
  t.com_candidates = {{ComRole::kChest, 2}, {ComRole::kBelly, 1}, {ComRole::kHip, 3}};
  return t;
}

int find_joint(const Topology& t, std::string_view name, int fallback) {
  for (std::size_t i = 0; i < t.joint_names.size(); ++i) {
    if (t.joint_names[i] == name) return static_cast<int>(i) + 1;
  }
  return fallback;
}

}  // namespace

ComRole parse_com_role(std::string_view name) {
  if (name == "chest") return ComRole::kChest;
  if (name == "belly") return ComRole::kBelly;
  if (name == "hip") return ComRole::kHip;
  throw ConfigError("unknown CoM role '" + std::string(name) + "' (expected chest, belly or hip)");
}

std::string to_string(ComRole role) {
  switch (role) {
    case ComRole::kChest: return "chest";
    case ComRole::kBelly: return "belly";
    case ComRole::kHip: return "hip";
  }
  return "?";
}

int Topology::com_joint(ComRole role) const {
  auto it = com_candidates.find(role);
  if (it == com_candidates.end()) {
    throw ConfigError("topology '" + name + "' has no " + to_string(role) + " CoM candidate");
  }
  return it->second;
}

std::vector<std::vector<int>> Topology::neighbors() const {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(num_joints));
  for (auto [c, p] : edges) {
    adj[static_cast<std::size_t>(c - 1)].push_back(p);
    adj[static_cast<std::size_t>(p - 1)].push_back(c);
  }
  for (auto& n : adj) std::sort(n.begin(), n.end());
  return adj;
}

void validate(const Topology& t) {
  const std::string who = "topology '" + t.name + "': ";
  if (t.num_joints <= 0) throw TopologyError(who + "num_joints must be positive");
  const auto v = static_cast<std::size_t>(t.num_joints);
  if (t.edges.size() != v - 1) {
    throw TopologyError(who + "a tree over " + std::to_string(v) + " joints needs " + std::to_string(v - 1) +
                        " edges, got " + std::to_string(t.edges.size()));
  }
  std::set<std::pair<int, int>> seen;
  for (auto [c, p] : t.edges) {
    if (c < 1 || c > t.num_joints || p < 1 || p > t.num_joints) {
      throw TopologyError(who + "edge (" + std::to_string(c) + ", " + std::to_string(p) + ") has a joint id outside [1, " +
                          std::to_string(v) + "]");
    }
    if (c == p) throw TopologyError(who + "self-loop at joint " + std::to_string(c));
    if (!seen.insert({std::min(c, p), std::max(c, p)}).second) {
      throw TopologyError(who + "duplicate edge (" + std::to_string(c) + ", " + std::to_string(p) + ")");
    }
  }
  // V-1 distinct edges plus connectivity implies acyclic.
  const auto depth = bfs_depth(t, 1);
  for (std::size_t i = 0; i < v; ++i) {
    if (depth[i] < 0) throw TopologyError(who + "graph is not connected (joint " + std::to_string(i + 1) + " unreachable)");
  }
  if (!t.joint_names.empty() && t.joint_names.size() != v) {
    throw TopologyError(who + "joint_names must have " + std::to_string(v) + " entries");
  }
  for (auto [role, id] : t.com_candidates) {
    if (id < 1 || id > t.num_joints) {
      throw TopologyError(who + to_string(role) + " CoM candidate " + std::to_string(id) + " is not a valid joint");
    }
  }
  for (const auto& r : t.synthetic_rules) {
    if (r.a == r.b) throw TopologyError(who + "synthetic joint " + std::to_string(r.joint) + " uses the same source twice");
    if (r.joint < 1 || r.joint > t.num_joints || r.a < 1 || r.a >= r.joint || r.b < 1 || r.b >= r.joint) {
      throw TopologyError(who + "synthetic joint " + std::to_string(r.joint) + " must come after its sources");
    }
  }
  for (const auto& [com, sets] : t.hierarchy_sets) {
    std::vector<int> count(v, 0);
    if (sets.empty() || sets[0] != std::vector<int>{com}) {
      throw TopologyError(who + "explicit hierarchy for joint " + std::to_string(com) + " must start with {" +
                          std::to_string(com) + "}");
    }
    for (const auto& s : sets) {
      for (int j : s) {
        if (j < 1 || j > t.num_joints) throw TopologyError(who + "explicit hierarchy names invalid joint " + std::to_string(j));
        ++count[static_cast<std::size_t>(j - 1)];
      }
    }
    if (std::any_of(count.begin(), count.end(), [](int c) { return c != 1; })) {
      throw TopologyError(who + "explicit hierarchy for joint " + std::to_string(com) + " does not partition the joints");
    }
  }
}

std::vector<int> bfs_depth(const Topology& t, int com) {
  if (com < 1 || com > t.num_joints) throw ConfigError("joint " + std::to_string(com) + " is not in " + t.name);
  const auto adj = t.neighbors();
  std::vector<int> depth(adj.size(), -1);
  std::deque<int> queue{com};
  depth[static_cast<std::size_t>(com - 1)] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int w : adj[static_cast<std::size_t>(u - 1)]) {
      auto& d = depth[static_cast<std::size_t>(w - 1)];
      if (d < 0) {
        d = depth[static_cast<std::size_t>(u - 1)] + 1;
        queue.push_back(w);
      }
    }
  }
  return depth;
}

std::vector<int> parent_map(const Topology& t, int com) {
  const auto depth = bfs_depth(t, com);
  std::vector<int> parent(depth.size(), 0);
  parent[static_cast<std::size_t>(com - 1)] = com;
  for (auto [c, p] : t.edges) {
    const int dc = depth[static_cast<std::size_t>(c - 1)];
    const int dp = depth[static_cast<std::size_t>(p - 1)];
    if (dc == dp + 1) parent[static_cast<std::size_t>(c - 1)] = p;
    else if (dp == dc + 1) parent[static_cast<std::size_t>(p - 1)] = c;
  }
  for (std::size_t i = 0; i < parent.size(); ++i) {
    if (parent[i] == 0) throw InternalError("parent_map: joint " + std::to_string(i + 1) + " has no parent");
  }
  return parent;
}

Topology builtin(std::string_view name) {
  Topology t;
  if (name == "ntu25") t = make_ntu25();
  else if (name == "kinetics18") t = make_kinetics18();
  else if (name == "kinetics20") t = extend_kinetics(make_kinetics18());
  else if (name == "toy5") t = make_toy5();
  else throw ConfigError("unknown builtin topology '" + std::string(name) + "'");
  validate(t);
  return t;
}

std::vector<std::string> builtin_names() { return {"ntu25", "kinetics18", "kinetics20", "toy5"}; }

Topology resolve(const std::string& name_or_path) {
  const auto names = builtin_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin(name_or_path);
  if (std::filesystem::exists(name_or_path)) return load(name_or_path);
  throw ConfigError("'" + name_or_path + "' is neither a builtin topology nor a readable file");
}

Topology from_json(const nlohmann::json& j) {
  try {
    Topology t;
    t.name = j.at("name").get<std::string>();
    t.num_joints = j.at("num_joints").get<int>();
    for (const auto& e : j.at("edges")) t.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    if (j.contains("joint_names")) t.joint_names = j["joint_names"].get<std::vector<std::string>>();
    if (j.contains("com_candidates")) {
      for (const auto& [role, id] : j["com_candidates"].items()) t.com_candidates[parse_com_role(role)] = id.get<int>();
    }
    if (j.contains("synthetic_rules")) {
      for (const auto& r : j["synthetic_rules"]) {
        t.synthetic_rules.push_back({r.at("joint").get<int>(), r.at("a").get<int>(), r.at("b").get<int>()});
      }
    }
    if (j.contains("hierarchy_sets")) {
      for (const auto& [com, sets] : j["hierarchy_sets"].items()) {
        t.hierarchy_sets[std::stoi(com)] = sets.get<std::vector<std::vector<int>>>();
      }
    }
    validate(t);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed topology JSON: ") + e.what());
  }
}

nlohmann::json to_json(const Topology& t) {
  nlohmann::json j;
  j["name"] = t.name;
  j["num_joints"] = t.num_joints;
  j["edges"] = nlohmann::json::array();
  for (auto [c, p] : t.edges) j["edges"].push_back({c, p});
  if (!t.joint_names.empty()) j["joint_names"] = t.joint_names;
  j["com_candidates"] = nlohmann::json::object();
  for (auto [role, id] : t.com_candidates) j["com_candidates"][to_string(role)] = id;
  if (!t.synthetic_rules.empty()) {
    j["synthetic_rules"] = nlohmann::json::array();
    for (const auto& r : t.synthetic_rules) j["synthetic_rules"].push_back({{"joint", r.joint}, {"a", r.a}, {"b", r.b}});
  }
  if (!t.hierarchy_sets.empty()) {
    j["hierarchy_sets"] = nlohmann::json::object();
    for (const auto& [com, sets] : t.hierarchy_sets) j["hierarchy_sets"][std::to_string(com)] = sets;
  }
  return j;
}

Topology load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open topology file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

Topology extend_kinetics(const Topology& base) {
  if (base.num_joints != 18) {
    throw TopologyError("extend_kinetics: expected an 18-joint skeleton, got " + std::to_string(base.num_joints));
  }
  const int neck = find_joint(base, "neck", 2);
  const int rhip = find_joint(base, "right_hip", 9);
  const int lhip = find_joint(base, "left_hip", 12);
  const int hip = 19;
  const int belly = 20;

  Topology t = base;
  t.name = base.name == "kinetics18" ? "kinetics20" : base.name + "+2";
  t.num_joints = 20;
  // The raw graph hangs each hip directly off its shoulder; those two links
  // are replaced by the hip -> belly -> neck spine.
  const int rsho = find_joint(base, "right_shoulder", 3);
  const int lsho = find_joint(base, "left_shoulder", 6);
  auto links = [](const std::pair<int, int>& e, int a, int b) {
    return (e.first == a && e.second == b) || (e.first == b && e.second == a);
  };
  std::erase_if(t.edges, [&](const std::pair<int, int>& e) { return links(e, rhip, rsho) || links(e, lhip, lsho); });
  t.edges.emplace_back(rhip, hip);
  t.edges.emplace_back(lhip, hip);
  t.edges.emplace_back(hip, belly);
  t.edges.emplace_back(belly, neck);
  if (!t.joint_names.empty()) {
    t.joint_names.emplace_back("hip");
    t.joint_names.emplace_back("belly");
  }
  t.synthetic_rules = base.synthetic_rules;
  t.synthetic_rules.push_back({hip, lhip, rhip});
  t.synthetic_rules.push_back({belly, neck, hip});
  t.com_candidates = {{ComRole::kChest, neck}, {ComRole::kBelly, belly}, {ComRole::kHip, hip}};
  t.hierarchy_sets.clear();
  validate(t);
  return t;
}

Topology relabel(const Topology& t, const std::vector<int>& perm) {
  if (perm.size() != static_cast<std::size_t>(t.num_joints)) throw ConfigError("relabel: permutation size mismatch");
  std::vector<int> check = perm;
  std::sort(check.begin(), check.end());
  for (std::size_t i = 0; i < check.size(); ++i) {
    if (check[i] != static_cast<int>(i) + 1) throw ConfigError("relabel: not a permutation of 1..V");
  }
  auto map = [&](int v) { return perm[static_cast<std::size_t>(v - 1)]; };
  Topology out = t;
  for (auto& [c, p] : out.edges) {
    c = map(c);
    p = map(p);
  }
  if (!t.joint_names.empty()) {
    for (std::size_t i = 0; i < t.joint_names.size(); ++i) {
      out.joint_names[static_cast<std::size_t>(perm[i] - 1)] = t.joint_names[i];
    }
  }
  for (auto& [role, id] : out.com_candidates) id = map(id);
  out.synthetic_rules.clear();
  for (const auto& r : t.synthetic_rules) out.synthetic_rules.push_back({map(r.joint), map(r.a), map(r.b)});
  out.hierarchy_sets.clear();
  for (const auto& [com, sets] : t.hierarchy_sets) {
    auto mapped = sets;
    for (auto& s : mapped)
      for (int& j : s) j = map(j);
    out.hierarchy_sets[map(com)] = mapped;
  }
  // Synthetic ordering constraints may not survive an arbitrary relabel.
  Topology probe = out;
  probe.synthetic_rules.clear();
  validate(probe);
  return out;
}

}  // namespace hdgcn::skeleton
