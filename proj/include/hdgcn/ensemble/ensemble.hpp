#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdgcn/data/dataset.hpp"
#include "hdgcn/train/trainer.hpp"
#include "json.hpp"

namespace hdgcn::ensemble {

struct Member {
  std::filesystem::path checkpoint;
  data::Stream stream = data::Stream::kJoint;
  /// CoM role or joint number; empty means the checkpoint's own CoM.
  std::string com;
  double weight = 1.0;
};

struct EnsembleSpec {
  std::vector<Member> members;

  void validate() const;
};

/// {"members": [{"checkpoint": ..., "stream": ..., "com": ..., "weight": ...}]};
/// relative checkpoint paths resolve against `root`.
EnsembleSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& root = {});
nlohmann::json to_json(const EnsembleSpec& spec);
EnsembleSpec read_spec(const std::filesystem::path& path);

/// Weighted sum of member probabilities. Members are summed in a canonical
/// order given by `order` (identity when empty) so the result does not depend
/// on how the caller listed them.
train::Scores fuse(const std::vector<train::Scores>& members, const std::vector<double>& weights,
                   const std::vector<std::size_t>& order = {});

/// Index of the largest entry of each row, lowest index on ties.
std::vector<int> predictions(const train::Scores& scores);

/// Accuracy per class; classes without samples get NaN.
std::vector<double> per_class_accuracy(const train::Scores& scores);

struct MemberReport {
  std::string checkpoint;
  std::string stream;
  std::string com;
  int com_joint = 0;
  double weight = 1.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<double> per_class;
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::size_t samples = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::vector<double> per_class;
  /// confusion[true][predicted] counts.
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<MemberReport> members;
  /// Per-class accuracy of the fusion of each CoM's members.
  std::map<std::string, std::vector<double>> per_com;
};

/// Loads every member, derives its input stream with its own CoM, scores
/// the dataset and fuses.
EvalReport evaluate(const EnsembleSpec& spec, const data::DatasetManifest& manifest);

/// Builds the report from already computed member scores.
EvalReport report_from_scores(const std::vector<MemberReport>& members, const std::vector<train::Scores>& scores,
                              const std::vector<std::string>& class_names);

nlohmann::json to_json(const EvalReport& report);
/// Columns: class, name, samples, ensemble, then one column per member.
void write_per_class_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace hdgcn::ensemble
