#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "hdgcn/core/error.hpp"
#include "hdgcn/graph/hd_graph.hpp"
#include "hdgcn/skeleton/topology.hpp"

using namespace hdgcn;
using skeleton::Topology;

namespace {

// Inward (child, parent) pairs of the 25-joint Kinect skeleton.
const std::vector<std::pair<int, int>> kNtuEdges{
    {1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},
    {9, 21},  {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15},
    {17, 1},  {18, 17}, {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};

std::set<std::pair<int, int>> undirected(const std::vector<std::pair<int, int>>& edges) {
  std::set<std::pair<int, int>> out;
  for (auto [a, b] : edges) out.insert({std::min(a, b), std::max(a, b)});
  return out;
}

Topology random_tree(std::mt19937_64& rng, int v) {
  Topology t;
  t.name = "random";
  t.num_joints = v;
  std::vector<int> perm(static_cast<std::size_t>(v));
  std::iota(perm.begin(), perm.end(), 1);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 1; i < v; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    t.edges.push_back({perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]});
  }
  return t;
}

Eigen::MatrixXd block(const graph::Adjacency& a, std::size_t l, std::size_t s) {
  Eigen::MatrixXd m(a.joints, a.joints);
  for (std::size_t i = 0; i < a.joints; ++i)
    for (std::size_t j = 0; j < a.joints; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.at(l, s, i, j);
  return m;
}

Eigen::MatrixXd sym_normalize(const Eigen::MatrixXd& a, const Eigen::VectorXd& counts) {
  const Eigen::VectorXd d = counts.unaryExpr([](double c) { return 1.0 / std::sqrt(std::max(1.0, c)); });
  return d.asDiagonal() * a * d.asDiagonal();
}

Eigen::VectorXd column_nonzeros(const Eigen::MatrixXd& a) {
  return (a.array() != 0.0).cast<double>().colwise().sum().transpose();
}

}  // namespace

TEST_CASE("ntu25 edges are the inward Kinect tree") {
  const auto t = skeleton::builtin("ntu25");
  CHECK(t.num_joints == 25);
  CHECK(t.edges == kNtuEdges);
  CHECK(t.com_joint(skeleton::ComRole::kChest) == 21);
  CHECK(t.com_joint(skeleton::ComRole::kBelly) == 2);
  CHECK(t.com_joint(skeleton::ComRole::kHip) == 1);
}

TEST_CASE("validate rejects malformed skeletons") {
  auto t = skeleton::builtin("ntu25");
  auto broken = t;
  broken.edges.pop_back();
  CHECK_THROWS_AS(skeleton::validate(broken), TopologyError);
  broken = t;
  broken.edges[0] = {1, 1};
  CHECK_THROWS_AS(skeleton::validate(broken), TopologyError);
  broken = t;
  broken.edges[0] = {1, 26};
  CHECK_THROWS_AS(skeleton::validate(broken), TopologyError);
  broken = t;
  broken.edges[1] = {2, 1};  // cycle 1-2, joint 21 side disconnected from the legs
  CHECK_THROWS_AS(skeleton::validate(broken), TopologyError);
  broken = t;
  broken.hierarchy_sets[2].back().pop_back();
  CHECK_THROWS_AS(skeleton::validate(broken), TopologyError);
  CHECK_NOTHROW(skeleton::validate(t));
}

TEST_CASE("every builtin validates and survives a JSON round trip") {
  for (const auto& name : skeleton::builtin_names()) {
    const auto t = skeleton::builtin(name);
    CHECK_NOTHROW(skeleton::validate(t));
    const auto back = skeleton::from_json(skeleton::to_json(t));
    CHECK(back.edges == t.edges);
    CHECK(back.num_joints == t.num_joints);
    CHECK(back.com_candidates == t.com_candidates);
    CHECK(back.hierarchy_sets == t.hierarchy_sets);
  }
}

TEST_CASE("kinetics extension adds a hip and a belly and stays a tree") {
  const auto base = skeleton::builtin("kinetics18");
  const auto ext = skeleton::extend_kinetics(base);
  CHECK(ext.num_joints == 20);
  CHECK(ext.edges.size() == 19);
  CHECK_NOTHROW(skeleton::validate(ext));
  const int hip = ext.com_joint(skeleton::ComRole::kHip);
  const int belly = ext.com_joint(skeleton::ComRole::kBelly);
  CHECK(hip > 18);
  CHECK(belly > 18);
  CHECK_THROWS_AS(skeleton::extend_kinetics(skeleton::builtin("ntu25")), TopologyError);
}

TEST_CASE("parent_map points every joint one step closer to the CoM") {
  const auto t = skeleton::builtin("ntu25");
  for (int com : {21, 2, 1}) {
    const auto parent = skeleton::parent_map(t, com);
    const auto depth = skeleton::bfs_depth(t, com);
    for (int v = 1; v <= 25; ++v) {
      const auto i = static_cast<std::size_t>(v - 1);
      if (v == com) {
        CHECK(parent[i] == com);
        CHECK(depth[i] == 0);
      } else {
        CHECK(depth[static_cast<std::size_t>(parent[i] - 1)] == depth[i] - 1);
        CHECK(undirected(t.edges).count({std::min(v, parent[i]), std::max(v, parent[i])}) == 1);
      }
    }
  }
}

TEST_CASE("explicit ntu25 hierarchy sets at the belly CoM") {
  const auto d = graph::decompose(skeleton::builtin("ntu25"), 2);
  const std::vector<std::vector<int>> golden{{2},           {1, 21},        {13, 17, 3, 5, 9}, {14, 18, 4, 6, 10},
                                             {15, 19, 7, 11}, {16, 20, 8, 12}, {22, 23, 24, 25}};
  REQUIRE(d.num_sets() == 7);
  CHECK(d.num_layers() == 6);
  for (std::size_t k = 0; k < 7; ++k) {
    auto got = d.sets[k];
    auto want = golden[k];
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
  }
}

TEST_CASE("BFS layering partitions joints by distance") {
  const auto t = skeleton::builtin("ntu25");
  const auto d = graph::decompose(t, 2, false);
  // Joint 22 hangs off 23 which hangs off the hand, one step deeper than 24/25.
  CHECK(d.num_sets() == 8);
  for (int com : {21, 2, 1}) {
    const auto bfs = graph::decompose(t, com, false);
    const auto depth = skeleton::bfs_depth(t, com);
    std::size_t total = 0;
    for (std::size_t k = 0; k < bfs.num_sets(); ++k) {
      for (int v : bfs.sets[k]) CHECK(depth[static_cast<std::size_t>(v - 1)] == static_cast<int>(k));
      total += bfs.sets[k].size();
    }
    CHECK(total == 25);
  }
}

TEST_CASE("conventional graph is the skeleton edges plus self loops") {
  const auto t = skeleton::builtin("ntu25");
  const auto a = graph::build_conventional(t);
  REQUIRE(a.layers == 1);
  std::set<std::pair<int, int>> pattern;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < 25; ++i)
      for (std::size_t j = 0; j < 25; ++j)
        if (a.at(0, s, i, j) != 0.0) pattern.insert({static_cast<int>(std::min(i, j)) + 1, static_cast<int>(std::max(i, j)) + 1});
  auto expected = undirected(kNtuEdges);
  for (int v = 1; v <= 25; ++v) expected.insert({v, v});
  CHECK(pattern == expected);
  CHECK(a.nonzeros(0, graph::kIdentity) == 25);
  CHECK(a.nonzeros(0, graph::kCentripetal) == 24);
  CHECK(a.nonzeros(0, graph::kCentrifugal) == 24);
}

TEST_CASE("PC centripetal edges over all layers recover the skeleton") {
  const auto t = skeleton::builtin("ntu25");
  for (int com : {21, 2, 1}) {
    const auto d = graph::decompose(t, com, false);
    const auto a = graph::build_hd(t, d, graph::Variant::kPC);
    std::set<std::pair<int, int>> found;
    for (std::size_t l = 0; l < a.layers; ++l)
      for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 25; ++j)
          if (a.at(l, graph::kCentripetal, i, j) != 0.0)
            found.insert({static_cast<int>(std::min(i, j)) + 1, static_cast<int>(std::max(i, j)) + 1});
    CHECK(found == undirected(kNtuEdges));
  }
  // The explicit sets put 22, 23, 24 and 25 in one set, so the two edges
  // inside it belong to no layer.
  const auto explicit_sets = graph::build_hd(t, graph::decompose(t, 2), graph::Variant::kPC);
  std::set<std::pair<int, int>> found;
  for (std::size_t l = 0; l < explicit_sets.layers; ++l)
    for (std::size_t i = 0; i < 25; ++i)
      for (std::size_t j = 0; j < 25; ++j)
        if (explicit_sets.at(l, graph::kCentripetal, i, j) != 0.0)
          found.insert({static_cast<int>(std::min(i, j)) + 1, static_cast<int>(std::max(i, j)) + 1});
  auto expected = undirected(kNtuEdges);
  expected.erase({22, 23});
  expected.erase({24, 25});
  CHECK(found == expected);
}

TEST_CASE("centripetal entries point from the inner set to the outer set") {
  const auto t = skeleton::builtin("ntu25");
  const auto d = graph::decompose(t, 2);
  const auto a = graph::build_hd(t, d, graph::Variant::kFC);
  const auto swapped = graph::build_hd(t, d, graph::Variant::kFC, graph::Direction::kSwapped);
  for (std::size_t l = 0; l < a.layers; ++l) {
    CHECK(a.nonzeros(l, graph::kCentripetal) == d.sets[l].size() * d.sets[l + 1].size());
    CHECK(a.nonzeros(l, graph::kCentrifugal) == d.sets[l].size() * d.sets[l + 1].size());
    CHECK(a.nonzeros(l, graph::kIdentity) == d.sets[l].size() + d.sets[l + 1].size());
    for (int inner : d.sets[l]) {
      for (int outer : d.sets[l + 1]) {
        const auto i = static_cast<std::size_t>(inner - 1);
        const auto o = static_cast<std::size_t>(outer - 1);
        CHECK(a.at(l, graph::kCentripetal, o, i) == 1.0);
        CHECK(a.at(l, graph::kCentrifugal, i, o) == 1.0);
        CHECK(swapped.at(l, graph::kCentripetal, i, o) == 1.0);
        CHECK(swapped.at(l, graph::kCentripetal, o, i) == 0.0);
      }
    }
    CHECK(block(a, l, graph::kCentripetal) == block(a, l, graph::kCentrifugal).transpose());
  }
}

TEST_CASE("normalization matches a diagonal-scaling oracle on 50 random graphs") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int g = 0; g < 50; ++g) {
    const int v = std::uniform_int_distribution<int>(3, 30)(rng);
    const auto t = random_tree(rng, v);
    const int com = std::uniform_int_distribution<int>(1, v)(rng);
    const auto d = graph::decompose(t, com);
    if (d.num_layers() == 0) continue;
    const auto variant = g % 2 ? graph::Variant::kFC : graph::Variant::kPC;
    const auto raw = graph::build_hd(t, d, variant);
    const auto per = graph::normalize(raw);
    const auto pooled = graph::normalize(raw, graph::NormScope::kPooled);
    for (std::size_t l = 0; l < raw.layers; ++l) {
      Eigen::VectorXd pooled_counts = Eigen::VectorXd::Zero(v);
      for (std::size_t s = 0; s < 3; ++s) pooled_counts += column_nonzeros(block(raw, l, s));
      for (std::size_t s = 0; s < 3; ++s) {
        const auto a = block(raw, l, s);
        worst = std::max(worst, (block(per, l, s) - sym_normalize(a, column_nonzeros(a))).cwiseAbs().maxCoeff());
        worst = std::max(worst, (block(pooled, l, s) - sym_normalize(a, pooled_counts)).cwiseAbs().maxCoeff());
      }
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("normalizing twice is rejected") {
  const auto t = skeleton::builtin("toy5");
  const auto a = graph::normalize(graph::build_conventional(t));
  CHECK(a.normalized);
  CHECK_THROWS_AS(graph::normalize(a), ConfigError);
}

TEST_CASE("DOT and JSON exports describe the decomposition") {
  const auto t = skeleton::builtin("ntu25");
  const auto d = graph::decompose(t, 2);
  const auto j = graph::decomposition_json(d);
  CHECK(j.dump().find("22") != std::string::npos);
  const auto dot = graph::to_dot(t, d, graph::build_hd(t, d, graph::Variant::kPC));
  CHECK(dot.rfind("digraph", 0) == 0);
  CHECK(dot.find("->") != std::string::npos);
}
