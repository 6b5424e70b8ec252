#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hdgcn/core/checkpoint.hpp"
#include "hdgcn/layers/aha.hpp"
#include "hdgcn/layers/hdgc_layer.hpp"
#include "hdgcn/model/config.hpp"
#include "hdgcn/skeleton/topology.hpp"

namespace hdgcn::model {

/// Four branches of width C/4 along frames: dilated k5 convolutions (d=1,2),
/// k3 max pooling, and a strided pointwise branch.
template <typename T>
class TemporalModule {
 public:
  TemporalModule() = default;
  TemporalModule(const std::string& name, std::size_t channels, std::size_t stride, bool batch_norm,
                 std::mt19937_64& rng);

  DiffTensor<T> forward(const DiffTensor<T>& x, bool training);
  void collect(layers::StateRefs<T>& out);

  static constexpr std::size_t kKernel = 5;

 private:
  struct Branch {
    Parameter<T> reduce;
    layers::BatchNorm<T> reduce_bn;
    Parameter<T> conv;  // (C/4, C/4, 5) for the dilated branches
    layers::BatchNorm<T> out_bn;
  };
  std::size_t stride_ = 1;
  std::vector<Branch> branches_;
};

template <typename T>
class Block {
 public:
  Block(const std::string& name, std::size_t in, std::size_t out, std::size_t stride, const ModelConfig& config,
        const graph::Adjacency& adjacency, const graph::Decomposition& decomp, std::mt19937_64& rng);

  DiffTensor<T> forward(const DiffTensor<T>& x, bool training);
  void collect(layers::StateRefs<T>& out);

  layers::HDGCLayer<T>& gcn() { return gcn_; }
  layers::AHA<T>& aha() { return aha_; }

 private:
  std::size_t in_;
  std::size_t out_;
  std::size_t stride_;
  layers::HDGCLayer<T> gcn_;
  layers::AHA<T> aha_;
  layers::BatchNorm<T> gcn_bn_;
  Parameter<T> down_;  // spatial shortcut when in != out
  layers::BatchNorm<T> down_bn_;
  TemporalModule<T> tcn_;
  Parameter<T> residual_;  // block shortcut when the shape changes
  layers::BatchNorm<T> residual_bn_;
};

/// Attention scores of one block for the last forward pass.
struct AttentionRecord {
  std::size_t block = 0;
  Shape shape;  // (N, L, C) or (N, L, 1)
  std::vector<double> scores;
};

template <typename T>
class Network {
 public:
  Network(const ModelConfig& config, std::uint64_t seed);

  /// x: (B, M, C_in, T, V) -> logits (B, classes), averaged over persons.
  DiffTensor<T> forward(const DiffTensor<T>& x, bool training);

  const ModelConfig& config() const { return config_; }
  const skeleton::Topology& topology() const { return topology_; }
  const graph::Decomposition& decomposition() const { return decomp_; }
  int com_joint() const { return com_; }

  layers::StateRefs<T> state();
  std::vector<Parameter<T>> parameters() { return state().params; }
  std::size_t parameter_count();

  std::vector<NamedTensor> state_dict();
  /// Every parameter and buffer must be present with a matching shape.
  void load_state_dict(const std::vector<NamedTensor>& tensors);

  std::vector<AttentionRecord> attention();
  void freeze_neighbors(bool on);
  std::mt19937_64& dropout_rng() { return dropout_rng_; }
  Block<T>& block(std::size_t i) { return *blocks_.at(i); }
  std::size_t num_blocks() const { return blocks_.size(); }

 private:
  ModelConfig config_;
  skeleton::Topology topology_;
  graph::Decomposition decomp_;
  int com_ = 0;
  layers::BatchNorm<T> input_bn_;
  std::vector<std::unique_ptr<Block<T>>> blocks_;
  layers::Linear<T> classifier_;
  std::mt19937_64 dropout_rng_;
};

/// Joint id of the configured CoM, which may be a role name or a number.
int resolve_com(const skeleton::Topology& topology, const std::string& com);

/// Normalized adjacency for a model configuration.
graph::Adjacency model_adjacency(const ModelConfig& config, const skeleton::Topology& topology,
                                 const graph::Decomposition& decomp);

struct ComplexityReport {
  std::size_t params = 0;
  /// 2 x multiply-accumulates of every linear map, counting EdgeConv as a
  /// (C_out, 2C) map applied to each of the k+1 edges of a point.
  std::uint64_t flops = 0;
  /// 2 x multiply-accumulates actually executed by this implementation,
  /// where EdgeConv is factored into two (C_out, C) products per point.
  std::uint64_t flops_executed = 0;
  std::size_t window = 0;
  std::size_t joints = 0;
  std::size_t classes = 0;
  std::string convention;
};

/// Analytic count from the configuration alone, for one person.
ComplexityReport complexity(const ModelConfig& config);
nlohmann::json to_json(const ComplexityReport& report);

}  // namespace hdgcn::model
