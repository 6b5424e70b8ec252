#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hdgcn/graph/hd_graph.hpp"
#include "hdgcn/layers/nn.hpp"

namespace hdgcn::layers {

struct HDGCConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  /// Single-layer sum over subsets, A_s F Θ_s, instead of the hierarchy stack.
  bool conventional = false;
  bool use_s_edgeconv = true;
  std::size_t knn_k = 5;
};

/// Graph convolution over a (normalized) adjacency with learnable entries.
/// forward returns the per-hierarchy stack (N, L, C_out, T, V); channels of
/// each layer are [s_id | s_cp | s_cf | S-EdgeConv], C_out/4 each. The
/// conventional form returns L = 1.
template <typename T>
class HDGCLayer {
 public:
  HDGCLayer() = default;
  HDGCLayer(const std::string& name, const HDGCConfig& config, const graph::Adjacency& adjacency,
            std::mt19937_64& rng);

  DiffTensor<T> forward(const DiffTensor<T>& x);
  /// ⊕_s A_s^(k) Φ(x) Θ_s^(k) for one layer: (N, 3C', T, V).
  DiffTensor<T> forward_subset(const DiffTensor<T>& x, std::size_t layer) const;
  /// EdgeConv over the kNN graph of temporally pooled Φ(x): (N, L, C', V).
  DiffTensor<T> s_edgeconv(const DiffTensor<T>& x);

  std::size_t num_layers() const { return layers_; }
  std::size_t reduced_channels() const { return reduced_; }
  const HDGCConfig& config() const { return config_; }
  void collect(StateRefs<T>& out);

  /// Reuse the neighbor lists of the next forward for all later ones, so a
  /// finite-difference check sees a fixed selection.
  void freeze_neighbors(bool on);

  Parameter<T>& phi() { return phi_; }
  Parameter<T>& theta(std::size_t layer, std::size_t subset) { return theta_[layer * 3 + subset]; }
  Parameter<T>& adjacency(std::size_t layer, std::size_t subset) { return adjacency_[layer * 3 + subset]; }
  Parameter<T>& edge_weight(std::size_t layer) { return edge_[layer]; }

 private:
  DiffTensor<T> stacked_adjacency(std::size_t first, std::size_t count) const;
  DiffTensor<T> stacked(const std::vector<Parameter<T>>& params, std::size_t first, std::size_t count) const;
  const ops::NeighborLists& neighbors_for(const DiffTensor<T>& pooled);

  HDGCConfig config_;
  std::size_t layers_ = 0;
  std::size_t joints_ = 0;
  std::size_t reduced_ = 0;
  Parameter<T> phi_;
  std::vector<Parameter<T>> theta_;
  std::vector<Parameter<T>> adjacency_;
  std::vector<Parameter<T>> edge_;
  bool frozen_ = false;
  std::optional<ops::NeighborLists> neighbors_;
};

}  // namespace hdgcn::layers
