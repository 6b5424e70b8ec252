#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdgcn/graph/hd_graph.hpp"
#include "hdgcn/layers/aha.hpp"
#include "json.hpp"

namespace hdgcn::model {

enum class GraphKind { kConventional, kHD };

struct ModelConfig {
  std::string topology = "ntu25";
  std::string com = "belly";
  bool explicit_sets = true;
  std::size_t num_classes = 120;
  std::size_t window = 64;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{64, 64, 64, 128, 128, 128, 256, 256, 256};
  std::vector<std::size_t> strides{1, 1, 1, 2, 1, 1, 2, 1, 1};

  GraphKind graph = GraphKind::kHD;
  graph::Variant variant = graph::Variant::kFC;
  graph::Direction direction = graph::Direction::kAlgorithm;
  graph::NormScope norm_scope = graph::NormScope::kPerSubset;
  bool s_edgeconv = true;
  std::size_t knn_k = 5;
  layers::AHAConfig aha;

  bool batch_norm = true;
  double dropout = 0.0;
  /// Input stream the model is trained on; informs ensemble evaluation.
  std::string stream = "joint";

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
/// Fields absent from `j` keep the values of `base`.
ModelConfig from_json(const nlohmann::json& j, ModelConfig base = {});

/// "ntu120-joint", "toy" or "micro".
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Short label of the graph/A-HA arrangement, e.g. "hd-fc+sedge/rsap+hedge".
std::string describe(const ModelConfig& config);

}  // namespace hdgcn::model
