#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hdgcn/cli/cli.hpp"
#include "nlohmann/json.hpp"
#include "test_util.hpp"

using namespace hdgcn;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "hdgcn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("every flag is documented in its command's help") {
  const auto table = cli::flag_table();
  CHECK(table.size() > 40);
  for (const auto& f : table) {
    INFO(f.command << " " << f.flag);
    CHECK_FALSE(f.description.empty());
    CHECK(cli::help_text(f.command).find(f.flag) != std::string::npos);
  }
  CHECK(run({"--help"}).code == cli::kOk);
  CHECK(run({"train", "--help"}).out.find("--resume") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"graph", "build", "--variant", "zz"}).code == cli::kUsage);
  CHECK(run({"graph", "build", "--topology", "no_such_topology"}).code == cli::kDataOrConfig);
  CHECK(run({"data", "inspect", "--in", "/nonexistent/file.hds"}).code == cli::kDataOrConfig);
  CHECK(run({"gradcheck", "--module", "ops", "--tolerance", "0"}).code == cli::kNumerical);
  CHECK(run({"gradcheck", "--module", "layers"}).code == cli::kOk);
}

TEST_CASE("graph build reports the hierarchy and exports DOT") {
  test::TempDir dir;
  const auto r = run({"graph", "build", "--topology", "ntu25", "--com", "belly", "--export-dot",
                      (dir.path / "g.dot").string(), "--export-json", (dir.path / "g.json").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(slurp(dir.path / "g.dot").rfind("digraph", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(dir.path / "g.json"));
  CHECK(j.dump().find("[22,23,24,25]") != std::string::npos);
}

TEST_CASE("flops command reports the ntu120 joint model") {
  const auto r = run({"flops", "--preset", "ntu120-joint"});
  REQUIRE(r.code == cli::kOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["params"].get<double>() == doctest::Approx(1.68e6).epsilon(0.1));
  CHECK(j.contains("convention"));
}

TEST_CASE("train configuration precedence: defaults, preset, file, flags") {
  test::TempDir dir;
  {
    std::ofstream cfg(dir.path / "cfg.json");
    cfg << R"({"model": {"num_classes": 11, "window": 20}, "train": {"epochs": 40, "batch_size": 4}})";
  }
  const auto r = run({"--print-config", "train", "--preset", "toy", "--config", (dir.path / "cfg.json").string(),
                      "--epochs", "12", "--data", (dir.path / "missing.json").string(), "--out",
                      (dir.path / "run").string()});
  CHECK(r.code == cli::kDataOrConfig);  // printed, then the manifest is missing
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["train"]["epochs"] == 12);           // flag beats file
  CHECK(j["train"]["batch_size"] == 4);        // file beats default
  CHECK(j["model"]["num_classes"] == 11);      // file beats preset
  CHECK(j["model"]["channels"].size() == 3);   // preset beats default
  CHECK(j["train"]["weight_decay"] == 0.0004); // default
  const auto seeded = run({"--print-config", "--seed", "77", "train", "--data", "x.json", "--out", "x"});
  CHECK(nlohmann::json::parse(seeded.out)["train"]["seed"] == 77);
}

TEST_CASE("end to end: generate, train, resume, evaluate, ensemble") {
  test::TempDir dir;
  const auto d = dir.path.string();
  REQUIRE(run({"--quiet", "data", "generate", "--out", d + "/ds", "--train-per-class", "3", "--test-per-class", "2"}).code ==
          cli::kOk);
  const std::vector<std::string> common{"--quiet", "train", "--preset", "toy", "--data", d + "/ds/train.json",
                                        "--eval", d + "/ds/test.json", "--epochs", "3", "--warmup", "1"};
  auto args = common;
  args.insert(args.end(), {"--out", d + "/full"});
  REQUIRE(run(args).code == cli::kOk);
  args = common;
  args.insert(args.end(), {"--out", d + "/split", "--stop-after", "1"});
  REQUIRE(run(args).code == cli::kOk);
  args = common;
  args.insert(args.end(), {"--out", d + "/split", "--resume"});
  REQUIRE(run(args).code == cli::kOk);
  CHECK(slurp(d + "/full/log.csv") == slurp(d + "/split/log.csv"));

  const auto ev = run({"eval", "--checkpoint", d + "/full/last", "--data", d + "/ds/test.json", "--per-class",
                       d + "/pc.csv", "--dump-attention", d + "/att.csv"});
  REQUIRE(ev.code == cli::kOk);
  CHECK(nlohmann::json::parse(ev.out)["samples"] == 16);
  CHECK(slurp(d + "/att.csv").find("block") != std::string::npos);

  {
    std::ofstream spec(d + "/spec.json");
    spec << R"({"members": [{"checkpoint": "full/last", "stream": "joint"},
                            {"checkpoint": "split/last", "stream": "joint", "weight": 0.5}]})";
  }
  const auto en = run({"ensemble", "--spec", d + "/spec.json", "--data", d + "/ds/test.json"});
  REQUIRE(en.code == cli::kOk);
  CHECK(nlohmann::json::parse(en.out)["members"].size() == 2);
}

TEST_CASE("the installed binary runs and reports usage errors") {
  const std::string exe = HDGCN_CLI_PATH;
  CHECK(std::system((exe + " --help > /dev/null").c_str()) == 0);
  const int status = std::system((exe + " bogus > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(status) == 1);
}
