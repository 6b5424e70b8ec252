#include "hdgcn/layers/aha.hpp"

#include "hdgcn/core/error.hpp"

namespace hdgcn::layers {

Pooling parse_pooling(const std::string& name) {
  if (name == "none") return Pooling::kNone;
  if (name == "sap") return Pooling::kSAP;
  if (name == "rsap") return Pooling::kRSAP;
  throw ConfigError("unknown A-HA pooling '" + name + "' (expected none, sap or rsap)");
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kNone: return "none";
    case Pooling::kSAP: return "sap";
    case Pooling::kRSAP: return "rsap";
  }
  return "?";
}

template <typename T>
AHA<T>::AHA(const std::string& name, std::size_t channels, const graph::Decomposition& decomp,
            const AHAConfig& config, std::mt19937_64& rng)
    : config_(config), layers_(decomp.num_layers()), joints_(static_cast<std::size_t>(decomp.num_joints)) {
  mask_.assign(layers_ * joints_, T(0));
  for (std::size_t l = 0; l < layers_; ++l) {
    const auto members = decomp.layer_joints(l);
    if (config.pooling == Pooling::kRSAP) {
      for (int j : members) mask_[l * joints_ + static_cast<std::size_t>(j - 1)] = T(1) / static_cast<T>(members.size());
    } else {
      for (std::size_t v = 0; v < joints_; ++v) mask_[l * joints_ + v] = T(1) / static_cast<T>(joints_);
    }
  }
  init(name, channels, rng);
}

template <typename T>
AHA<T>::AHA(const std::string& name, std::size_t channels, std::size_t layers, std::size_t joints,
            const AHAConfig& config, std::mt19937_64& rng)
    : config_(config), layers_(layers), joints_(joints) {
  if (config.pooling == Pooling::kRSAP) throw ConfigError(name + ": RSAP needs a hierarchy decomposition");
  mask_.assign(layers_ * joints_, T(1) / static_cast<T>(joints_));
  init(name, channels, rng);
}

template <typename T>
void AHA<T>::init(const std::string& name, std::size_t channels, std::mt19937_64& rng) {
  if (config_.pooling == Pooling::kNone) return;
  if (config_.h_edgeconv && (config_.h_knn_k < 1 || config_.h_knn_k >= layers_)) {
    throw ConfigError(name + ": h_knn_k must be in [1, N_L) = [1, " + std::to_string(layers_) + "), got " +
                      std::to_string(config_.h_knn_k));
  }
  const std::size_t out = config_.scalar_attention ? 1 : channels;
  const std::size_t in = config_.h_edgeconv ? 2 * channels : channels;
  weight_ = make_weight<T>(name + (config_.h_edgeconv ? ".h_edge" : ".att"), out, in, rng);
}

template <typename T>
DiffTensor<T> AHA<T>::pool(const DiffTensor<T>& stack) const {
  if (stack.rank() != 5 || stack.dim(1) != layers_ || stack.dim(4) != joints_) {
    throw DimensionError("A-HA: expected (N, " + std::to_string(layers_) + ", C, T, " + std::to_string(joints_) +
                         ") stack, got " + hdgcn::to_string(stack.shape()));
  }
  const auto peak = ops::reduce(stack, 3, ops::ReduceMode::kMax);  // (N, L, C, V)
  const auto mask = DiffTensor<T>::constant({1, layers_, 1, joints_}, mask_);
  return ops::reduce(ops::mul(peak, mask), 3, ops::ReduceMode::kSum);
}

template <typename T>
DiffTensor<T> AHA<T>::attention(const DiffTensor<T>& pooled) {
  // Hierarchy layers become the points of a (N, C, L) cloud.
  const auto nodes = ops::permute(pooled, {0, 2, 1});
  DiffTensor<T> logits;
  if (config_.h_edgeconv) {
    if (!frozen_ || !neighbors_ || neighbors_->batch != nodes.dim(0)) neighbors_ = ops::knn(nodes, config_.h_knn_k);
    logits = ops::edge_conv(nodes, weight_.tensor(), *neighbors_);
  } else {
    logits = ops::pointwise_conv(nodes, weight_.tensor());
  }
  return ops::permute(ops::sigmoid(logits), {0, 2, 1});
}

template <typename T>
DiffTensor<T> AHA<T>::aggregate(const DiffTensor<T>& stack, const DiffTensor<T>& scores) {
  return ops::weighted_sum(stack, scores);
}

template <typename T>
DiffTensor<T> AHA<T>::forward(const DiffTensor<T>& stack) {
  if (config_.pooling == Pooling::kNone) {
    last_attention_.clear();
    last_shape_.clear();
    return ops::reduce(stack, 1, ops::ReduceMode::kSum);
  }
  const auto scores = attention(pool(stack));
  last_attention_.assign(scores.values().begin(), scores.values().end());
  last_shape_ = scores.shape();
  return aggregate(stack, scores);
}

template <typename T>
void AHA<T>::collect(StateRefs<T>& out) {
  if (weight_.defined()) out.params.push_back(weight_);
}

template <typename T>
void AHA<T>::freeze_neighbors(bool on) {
  frozen_ = on;
  neighbors_.reset();
}

template class AHA<float>;
template class AHA<double>;

}  // namespace hdgcn::layers
