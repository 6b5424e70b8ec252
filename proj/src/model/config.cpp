#include "hdgcn/model/config.hpp"

#include "hdgcn/core/error.hpp"
#include "hdgcn/skeleton/topology.hpp"

namespace hdgcn::model {
namespace {

std::string direction_name(graph::Direction d) { return d == graph::Direction::kAlgorithm ? "algorithm" : "swapped"; }

graph::Direction parse_direction(const std::string& s) {
  if (s == "algorithm") return graph::Direction::kAlgorithm;
  if (s == "swapped") return graph::Direction::kSwapped;
  throw ConfigError("unknown edge direction '" + s + "' (expected algorithm or swapped)");
}

std::string scope_name(graph::NormScope s) { return s == graph::NormScope::kPerSubset ? "per-subset" : "pooled"; }

graph::NormScope parse_scope(const std::string& s) {
  if (s == "per-subset") return graph::NormScope::kPerSubset;
  if (s == "pooled") return graph::NormScope::kPooled;
  throw ConfigError("unknown normalization scope '" + s + "' (expected per-subset or pooled)");
}

}  // namespace

void ModelConfig::validate() const {
  if (channels.empty()) throw ConfigError("model: at least one block is required");
  if (channels.size() != strides.size()) throw ConfigError("model: channels and strides must have equal length");
  for (auto c : channels) {
    if (c == 0 || c % 4 != 0) throw ConfigError("model: block channels must be positive multiples of 4");
  }
  for (auto s : strides) {
    if (s != 1 && s != 2) throw ConfigError("model: temporal strides must be 1 or 2");
  }
  if (num_classes < 1) throw ConfigError("model: num_classes must be positive");
  if (window < 1) throw ConfigError("model: window must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
  if (graph == GraphKind::kConventional && aha.pooling != layers::Pooling::kNone) {
    throw ConfigError("model: the conventional graph has a single layer; A-HA pooling must be none");
  }
  if (stream != "joint" && stream != "bone" && stream != "joint_motion" && stream != "bone_motion") {
    throw ConfigError("model: unknown stream '" + stream + "'");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"topology", c.topology},
      {"com", c.com},
      {"explicit_sets", c.explicit_sets},
      {"num_classes", c.num_classes},
      {"window", c.window},
      {"in_channels", c.in_channels},
      {"channels", c.channels},
      {"strides", c.strides},
      {"graph", c.graph == GraphKind::kHD ? "hd" : "conventional"},
      {"variant", graph::to_string(c.variant)},
      {"direction", direction_name(c.direction)},
      {"norm_scope", scope_name(c.norm_scope)},
      {"s_edgeconv", c.s_edgeconv},
      {"knn_k", c.knn_k},
      {"aha",
       {{"pooling", layers::to_string(c.aha.pooling)},
        {"h_edgeconv", c.aha.h_edgeconv},
        {"h_knn_k", c.aha.h_knn_k},
        {"scalar_attention", c.aha.scalar_attention}}},
      {"batch_norm", c.batch_norm},
      {"dropout", c.dropout},
      {"stream", c.stream},
  };
}

ModelConfig from_json(const nlohmann::json& j, ModelConfig c) {
  try {
    if (j.contains("preset")) c = preset(j["preset"].get<std::string>());
    auto take = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    take("topology", c.topology);
    take("com", c.com);
    take("explicit_sets", c.explicit_sets);
    take("num_classes", c.num_classes);
    take("window", c.window);
    take("in_channels", c.in_channels);
    take("channels", c.channels);
    take("strides", c.strides);
    if (j.contains("graph")) {
      const auto g = j["graph"].get<std::string>();
      if (g == "hd") c.graph = GraphKind::kHD;
      else if (g == "conventional") c.graph = GraphKind::kConventional;
      else throw ConfigError("unknown graph kind '" + g + "' (expected hd or conventional)");
    }
    if (j.contains("variant")) c.variant = graph::parse_variant(j["variant"].get<std::string>());
    if (j.contains("direction")) c.direction = parse_direction(j["direction"].get<std::string>());
    if (j.contains("norm_scope")) c.norm_scope = parse_scope(j["norm_scope"].get<std::string>());
    take("s_edgeconv", c.s_edgeconv);
    take("knn_k", c.knn_k);
    if (j.contains("aha")) {
      const auto& a = j["aha"];
      if (a.contains("pooling")) c.aha.pooling = layers::parse_pooling(a["pooling"].get<std::string>());
      if (a.contains("h_edgeconv")) c.aha.h_edgeconv = a["h_edgeconv"].get<bool>();
      if (a.contains("h_knn_k")) c.aha.h_knn_k = a["h_knn_k"].get<std::size_t>();
      if (a.contains("scalar_attention")) c.aha.scalar_attention = a["scalar_attention"].get<bool>();
    }
    take("batch_norm", c.batch_norm);
    take("dropout", c.dropout);
    take("stream", c.stream);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "ntu120-joint") {
    c.num_classes = 120;
  } else if (name == "ntu60-joint") {
    c.num_classes = 60;
  } else if (name == "toy") {
    c.num_classes = 8;
    c.window = 16;
    c.channels = {16, 32, 32};
    c.strides = {1, 2, 1};
  } else if (name == "micro") {
    c.topology = "toy5";
    c.num_classes = 3;
    c.window = 8;
    c.channels = {8, 8};
    c.strides = {1, 2};
    c.knn_k = 2;
    c.aha.h_knn_k = 1;
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() { return {"ntu120-joint", "ntu60-joint", "toy", "micro"}; }

std::string describe(const ModelConfig& c) {
  std::string g = c.graph == GraphKind::kConventional ? "conventional"
                                                       : "hd-" + graph::to_string(c.variant) + (c.s_edgeconv ? "+sedge" : "");
  std::string a = layers::to_string(c.aha.pooling);
  if (c.aha.pooling != layers::Pooling::kNone && c.aha.h_edgeconv) a += "+hedge";
  return g + "/" + a;
}

}  // namespace hdgcn::model
