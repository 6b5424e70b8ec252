#include <Eigen/Dense>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "hdgcn/core/error.hpp"
#include "hdgcn/data/dataset.hpp"
#include "hdgcn/data/synthetic.hpp"
#include "test_util.hpp"

using namespace hdgcn;
using data::SkeletonSequence;
using data::Stream;

namespace {

SkeletonSequence random_sequence(std::size_t persons, std::size_t frames, std::size_t joints, std::uint64_t seed) {
  SkeletonSequence s;
  s.topology = "ntu25";
  s.persons = persons;
  s.frames = frames;
  s.joints = joints;
  s.data.resize(persons * 3 * frames * joints);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : s.data) v = u(rng);
  return s;
}

// Parent of every joint when the ntu25 tree is hung from the belly joint 2.
const int kParentFromBelly[25] = {2,  2,  21, 3,  21, 5,  6,  7,  21, 9,  10, 11, 1,
                                  13, 14, 15, 1,  17, 18, 19, 2,  23, 8,  25, 12};

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("bone stream subtracts the parent joint") {
  const auto topo = skeleton::builtin("ntu25");
  const auto j = random_sequence(2, 4, 25, 1);
  const auto b = data::derive_bone(j, topo, 2);
  CHECK(b.stream == Stream::kBone);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t v = 0; v < 25; ++v) {
          const float expected = v == 1 ? 0.0f : j.at(m, c, t, v) - j.at(m, c, t, static_cast<std::size_t>(kParentFromBelly[v] - 1));
          CHECK(b.at(m, c, t, v) == expected);
        }
}

TEST_CASE("bones telescope back to joints relative to the CoM") {
  const auto topo = skeleton::builtin("ntu25");
  const auto j = random_sequence(1, 3, 25, 2);
  for (int com : {21, 2, 1}) {
    const auto b = data::derive_bone(j, topo, com);
    const auto parent = skeleton::parent_map(topo, com);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < 3; ++t)
        for (int v = 1; v <= 25; ++v) {
          double sum = 0.0;
          for (int u = v; u != com; u = parent[static_cast<std::size_t>(u - 1)]) sum += b.at(0, c, t, static_cast<std::size_t>(u - 1));
          CHECK(sum == doctest::Approx(j.at(0, c, t, static_cast<std::size_t>(v - 1)) -
                                       j.at(0, c, t, static_cast<std::size_t>(com - 1)))
                           .epsilon(1e-5));
        }
  }
}

TEST_CASE("motion stream is the forward difference with a zero last frame") {
  const auto j = random_sequence(1, 5, 25, 3);
  const auto m = data::derive_motion(j);
  CHECK(m.stream == Stream::kJointMotion);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t v = 0; v < 25; ++v) {
      for (std::size_t t = 0; t + 1 < 5; ++t) CHECK(m.at(0, c, t, v) == j.at(0, c, t + 1, v) - j.at(0, c, t, v));
      CHECK(m.at(0, c, 4, v) == 0.0f);
    }
  auto one = random_sequence(1, 1, 25, 4);
  CHECK_THROWS_AS(data::derive_motion(one), DataError);
}

TEST_CASE("bone and motion derivations commute") {
  const auto topo = skeleton::builtin("ntu25");
  const auto j = random_sequence(2, 6, 25, 5);
  const auto a = data::derive_motion(data::derive_bone(j, topo, 2));
  const auto b = data::derive_bone(data::derive_motion(j), topo, 2);
  const auto c = data::derive_stream(j, Stream::kBoneMotion, topo, 2);
  CHECK(a.stream == Stream::kBoneMotion);
  CHECK(b.stream == Stream::kBoneMotion);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-5));
    CHECK(c.data[i] == doctest::Approx(a.data[i]).epsilon(1e-5));
  }
  CHECK_THROWS_AS(data::derive_bone(a, topo, 2), DataError);
}

TEST_CASE("preprocess centers on the first-frame CoM and fixes the length") {
  auto s = random_sequence(2, 37, 25, 6);
  for (auto temporal : {data::Temporal::kResample, data::Temporal::kLoopPad}) {
    for (std::size_t window : {16u, 37u, 64u}) {
      const data::PreprocessOptions opt{.window = window, .temporal = temporal};
      const auto p = data::preprocess(s, 2, opt);
      CHECK(p.frames == window);
      for (std::size_t c = 0; c < 3; ++c) CHECK(p.at(0, c, 0, 1) == 0.0f);
      // Already centered and of the right length: unchanged.
      const auto again = data::preprocess(p, 2, opt);
      CHECK(again.data == p.data);
      // Endpoints survive resampling.
      if (temporal == data::Temporal::kResample)
        for (std::size_t v = 0; v < 25; ++v)
          CHECK(p.at(1, 2, window - 1, v) == doctest::Approx(s.at(1, 2, 36, v) - s.at(0, 2, 0, 1)).epsilon(1e-5));
    }
  }
  // Loop padding repeats the sequence.
  const auto looped = data::preprocess(s, 2, {.window = 64, .temporal = data::Temporal::kLoopPad});
  for (std::size_t v = 0; v < 25; ++v) CHECK(looped.at(1, 0, 40, v) == looped.at(1, 0, 3, v));
}

TEST_CASE("preprocess is invariant to a global translation") {
  auto s = random_sequence(1, 20, 25, 7);
  auto shifted = s;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 20 * 25; ++i) shifted.data[c * 500 + i] += static_cast<float>(c + 1) * 0.5f;
  const auto a = data::preprocess(s, 2, {.window = 20});
  const auto b = data::preprocess(shifted, 2, {.window = 20});
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(b.data[i] == doctest::Approx(a.data[i]).epsilon(1e-5));
}

TEST_CASE("random crops stay inside the sequence") {
  auto s = random_sequence(1, 30, 25, 8);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 10; ++k) {
    const auto p = data::preprocess(s, 2, {.window = 30, .crop_min_fraction = 0.5}, &rng);
    CHECK(p.frames == 30);
    for (float v : p.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("HDS1 and JSON round trips are bit exact") {
  test::TempDir dir;
  auto s = random_sequence(2, 7, 25, 9);
  s.label = 5;
  s.stream = Stream::kBone;
  s.data[3] = -0.0f;
  s.data[4] = 1e-40f;  // subnormal
  const auto bytes = data::encode_hds(s);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HDS1");
  const auto back = data::decode_hds(bytes);
  CHECK(std::memcmp(back.data.data(), s.data.data(), s.data.size() * 4) == 0);
  CHECK(back.label == s.label);
  CHECK(back.stream == s.stream);
  CHECK(back.topology == "ntu25");
  for (const char* name : {"a.hds", "a.json"}) {
    data::write_sequence(dir.path / name, s);
    const auto r = data::read_sequence(dir.path / name);
    CHECK(std::memcmp(r.data.data(), s.data.data(), s.data.size() * 4) == 0);
    CHECK(r.persons == 2);
    CHECK(r.frames == 7);
    CHECK(r.label == 5);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 2);
  CHECK_THROWS_AS(data::decode_hds(cut), DataError);
  s.label.reset();
  CHECK_FALSE(data::decode_hds(data::encode_hds(s)).label.has_value());
}

TEST_CASE("validate rejects malformed sequences") {
  auto s = random_sequence(1, 3, 25, 10);
  s.data[5] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(data::validate(s), DataError);
  s = random_sequence(1, 3, 25, 10);
  s.data.pop_back();
  CHECK_THROWS_AS(data::validate(s), DataError);
  s = random_sequence(1, 3, 18, 10);
  CHECK_THROWS_AS(data::validate(s, skeleton::builtin("ntu25")), DataError);
}

TEST_CASE("synthetic joints are appended as midpoints") {
  const auto topo = skeleton::builtin("kinetics20");
  REQUIRE(topo.synthetic_rules.size() == 2);
  auto s = random_sequence(1, 2, 18, 11);
  const auto ext = data::apply_synthetic_rules(s, topo);
  REQUIRE(ext.joints == 20);
  for (const auto& r : topo.synthetic_rules)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(ext.at(0, c, 1, static_cast<std::size_t>(r.joint - 1)) ==
            doctest::Approx(0.5 * (ext.at(0, c, 1, static_cast<std::size_t>(r.a - 1)) +
                                   ext.at(0, c, 1, static_cast<std::size_t>(r.b - 1)))));
  CHECK(data::apply_synthetic_rules(ext, topo).data == ext.data);
}

TEST_CASE("synthetic generator is deterministic per seed") {
  test::TempDir a, b, c;
  data::SyntheticSpec spec{.train_per_class = 3, .test_per_class = 2};
  data::generate_synthetic(spec, a.path);
  data::generate_synthetic(spec, b.path);
  spec.seed = 2;
  data::generate_synthetic(spec, c.path);
  std::size_t files = 0, differ = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path);
    CHECK(file_bytes(e.path()) == file_bytes(b.path / rel));
    if (e.path().extension() == ".hds") differ += file_bytes(e.path()) != file_bytes(c.path / rel);
    ++files;
  }
  CHECK(files == 8 * 5 + 2);
  CHECK(differ == 8 * 5);
  const auto manifest = data::read_manifest(a.path / "train.json");
  CHECK(manifest.samples.size() == 24);
  CHECK(manifest.class_names == data::synthetic_class_names());
  CHECK_NOTHROW(data::validate(manifest));
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    CHECK(manifest.samples[i].label == data::synthetic_label(spec, i));
    CHECK(data::read_sequence(manifest.path_of(manifest.samples[i])).label == manifest.samples[i].label);
  }
}

TEST_CASE("noise-free synthetic motion keeps every bone length") {
  const auto topo = skeleton::builtin("ntu25");
  const auto rest = data::rest_pose();
  data::SyntheticSpec spec{.noise = 0.0};
  for (std::size_t i = 0; i < 16; ++i) {
    const auto s = data::synthetic_sample(spec, "train", i);
    CHECK(s.label == data::synthetic_label(spec, i));
    for (auto [child, parent] : topo.edges) {
      const auto a = static_cast<std::size_t>(child - 1);
      const auto b = static_cast<std::size_t>(parent - 1);
      double rest_len = 0.0;
      for (std::size_t c = 0; c < 3; ++c) rest_len += std::pow(rest[c * 25 + a] - rest[c * 25 + b], 2);
      for (std::size_t t = 0; t < s.frames; ++t) {
        double len = 0.0;
        for (std::size_t c = 0; c < 3; ++c) len += std::pow(s.at(0, c, t, a) - s.at(0, c, t, b), 2);
        CHECK(std::sqrt(len) == doctest::Approx(std::sqrt(rest_len)).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("a ridge classifier on the synthetic set is useful but not perfect") {
  test::TempDir dir;
  data::SyntheticSpec spec;
  const auto ds = data::generate_synthetic(spec, dir.path);
  const auto topo = skeleton::builtin("ntu25");
  data::LoadOptions opt{.com = 2, .preprocess = {.window = 16}};
  const auto train = data::load_dataset(ds.train, topo, opt);
  const auto test = data::load_dataset(ds.test, topo, opt);
  const auto d = static_cast<Eigen::Index>(train.sample_numel());
  auto matrix = [&](const data::Dataset& x) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), d);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (Eigen::Index k = 0; k < d; ++k) m(static_cast<Eigen::Index>(i), k) = x.sample(i)[k];
    return m;
  };
  const Eigen::MatrixXd xtr = matrix(train);
  const Eigen::MatrixXd xte = matrix(test);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(xtr.rows(), 8);
  for (std::size_t i = 0; i < train.size(); ++i) y(static_cast<Eigen::Index>(i), train.labels[i]) = 1.0;
  // Dual ridge: W = X^T (X X^T + lambda I)^-1 Y.
  const Eigen::MatrixXd gram = xtr * xtr.transpose() + 1.0 * Eigen::MatrixXd::Identity(xtr.rows(), xtr.rows());
  const Eigen::MatrixXd scores = xte * (xtr.transpose() * gram.ldlt().solve(y));
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    correct += best == test.labels[static_cast<std::size_t>(i)];
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(test.size());
  MESSAGE("ridge accuracy " << acc);
  CHECK(acc > 0.5);
  CHECK(acc < 1.0);
}
