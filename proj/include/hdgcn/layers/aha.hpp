#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hdgcn/graph/hd_graph.hpp"
#include "hdgcn/layers/nn.hpp"

namespace hdgcn::layers {

enum class Pooling { kNone, kSAP, kRSAP };

Pooling parse_pooling(const std::string& name);
std::string to_string(Pooling p);

struct AHAConfig {
  Pooling pooling = Pooling::kRSAP;
  bool h_edgeconv = true;
  std::size_t h_knn_k = 2;
  /// One score per hierarchy layer instead of one per channel and layer.
  bool scalar_attention = false;
};

/// Weighs the hierarchy stack (N, L, C, T, V) by a sigmoid attention map and
/// sums over L. With Pooling::kNone the stack is summed directly.
template <typename T>
class AHA {
 public:
  AHA() = default;
  AHA(const std::string& name, std::size_t channels, const graph::Decomposition& decomp, const AHAConfig& config,
      std::mt19937_64& rng);
  /// Layer count given directly, for stacks not tied to a decomposition (SAP only).
  AHA(const std::string& name, std::size_t channels, std::size_t layers, std::size_t joints, const AHAConfig& config,
      std::mt19937_64& rng);

  DiffTensor<T> forward(const DiffTensor<T>& stack);

  /// Max over frames, then masked average over joints: (N, L, C).
  DiffTensor<T> pool(const DiffTensor<T>& stack) const;
  /// Sigmoid scores (N, L, C) or (N, L, 1) with scalar attention.
  DiffTensor<T> attention(const DiffTensor<T>& pooled);
  static DiffTensor<T> aggregate(const DiffTensor<T>& stack, const DiffTensor<T>& scores);

  /// Scores from the last forward, (N, L, C) or (N, L, 1).
  const std::vector<T>& last_attention() const { return last_attention_; }
  const Shape& last_attention_shape() const { return last_shape_; }
  const std::vector<T>& pooling_mask() const { return mask_; }

  const AHAConfig& config() const { return config_; }
  void collect(StateRefs<T>& out);
  void freeze_neighbors(bool on);

 private:
  void init(const std::string& name, std::size_t channels, std::mt19937_64& rng);

  AHAConfig config_;
  std::size_t layers_ = 0;
  std::size_t joints_ = 0;
  std::vector<T> mask_;  // (L, V) pooling weights
  Parameter<T> weight_;
  bool frozen_ = false;
  std::optional<ops::NeighborLists> neighbors_;
  std::vector<T> last_attention_;
  Shape last_shape_;
};

}  // namespace hdgcn::layers
