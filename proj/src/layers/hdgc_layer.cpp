#include "hdgcn/layers/hdgc_layer.hpp"

#include "hdgcn/core/error.hpp"

namespace hdgcn::layers {
namespace {

const char* kSubsetNames[3] = {"id", "cp", "cf"};

}  // namespace

template <typename T>
HDGCLayer<T>::HDGCLayer(const std::string& name, const HDGCConfig& config, const graph::Adjacency& adjacency,
                        std::mt19937_64& rng)
    : config_(config), layers_(adjacency.layers), joints_(adjacency.joints) {
  if (config.out_channels == 0 || config.out_channels % 4 != 0) {
    throw ConfigError(name + ": output channels must be a positive multiple of 4, got " +
                      std::to_string(config.out_channels));
  }
  if (!adjacency.normalized) throw ConfigError(name + ": adjacency must be normalized");
  if (config.conventional && layers_ != 1) throw ConfigError(name + ": conventional graph must have one layer");
  if (!config.conventional && config.use_s_edgeconv && (config.knn_k < 1 || config.knn_k >= joints_)) {
    throw ConfigError(name + ": knn_k must be in [1, V) for S-EdgeConv, got " + std::to_string(config.knn_k));
  }
  const std::size_t c = config.out_channels;
  const std::size_t cin = config.in_channels;
  reduced_ = c / 4;

  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t s = 0; s < 3; ++s) {
      std::vector<T> init(joints_ * joints_);
      for (std::size_t i = 0; i < joints_; ++i)
        for (std::size_t j = 0; j < joints_; ++j) init[i * joints_ + j] = static_cast<T>(adjacency.at(l, s, i, j));
      adjacency_.emplace_back(name + ".adj.l" + std::to_string(l) + "." + kSubsetNames[s], Shape{joints_, joints_},
                              std::move(init));
    }
  }
  if (config.conventional) {
    for (std::size_t s = 0; s < 3; ++s) {
      theta_.push_back(make_weight<T>(name + ".theta." + kSubsetNames[s], c, cin, rng));
    }
    return;
  }
  phi_ = make_weight<T>(name + ".phi", reduced_, cin, rng);
  for (std::size_t l = 0; l < layers_; ++l) {
    for (std::size_t s = 0; s < 3; ++s) {
      theta_.push_back(make_weight<T>(name + ".theta.l" + std::to_string(l) + "." + kSubsetNames[s], reduced_,
                                      reduced_, rng));
    }
  }
  if (config.use_s_edgeconv) {
    for (std::size_t l = 0; l < layers_; ++l) {
      edge_.push_back(make_weight<T>(name + ".edge.l" + std::to_string(l), reduced_, 2 * reduced_, rng));
    }
  }
}

template <typename T>
DiffTensor<T> HDGCLayer<T>::stacked(const std::vector<Parameter<T>>& params, std::size_t first,
                                    std::size_t count) const {
  if (count == 1) return params[first].tensor();
  std::vector<DiffTensor<T>> parts;
  for (std::size_t i = first; i < first + count; ++i) parts.push_back(params[i].tensor());
  return ops::concat(parts, 0);
}

template <typename T>
DiffTensor<T> HDGCLayer<T>::stacked_adjacency(std::size_t first, std::size_t count) const {
  std::vector<DiffTensor<T>> parts;
  for (std::size_t i = first; i < first + count; ++i) {
    parts.push_back(ops::reshape(adjacency_[i].tensor(), {1, joints_, joints_}));
  }
  return ops::concat(parts, 0);
}

template <typename T>
const ops::NeighborLists& HDGCLayer<T>::neighbors_for(const DiffTensor<T>& pooled) {
  if (!frozen_ || !neighbors_ || neighbors_->batch != pooled.dim(0)) neighbors_ = ops::knn(pooled, config_.knn_k);
  return *neighbors_;
}

template <typename T>
void HDGCLayer<T>::freeze_neighbors(bool on) {
  frozen_ = on;
  neighbors_.reset();
}

template <typename T>
DiffTensor<T> HDGCLayer<T>::forward_subset(const DiffTensor<T>& x, std::size_t layer) const {
  if (config_.conventional) throw ConfigError("forward_subset: not defined for the conventional graph");
  if (layer >= layers_) throw DimensionError("forward_subset: layer index out of range");
  const auto z = ops::pointwise_conv(x, phi_.tensor());
  const auto y = ops::pointwise_conv(z, stacked(theta_, layer * 3, 3));
  return ops::graph_conv(y, stacked_adjacency(layer * 3, 3));
}

template <typename T>
DiffTensor<T> HDGCLayer<T>::s_edgeconv(const DiffTensor<T>& x) {
  if (edge_.empty()) throw ConfigError("s_edgeconv: S-EdgeConv is disabled for this layer");
  const auto z = ops::pointwise_conv(x, phi_.tensor());
  const auto pooled = ops::reduce(z, 2, ops::ReduceMode::kMean);
  const auto e = ops::edge_conv(pooled, stacked(edge_, 0, layers_), neighbors_for(pooled));
  return ops::reshape(e, {x.dim(0), layers_, reduced_, joints_});
}

template <typename T>
DiffTensor<T> HDGCLayer<T>::forward(const DiffTensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(3) != joints_) {
    throw DimensionError("HDGCLayer: expected (N, " + std::to_string(config_.in_channels) + ", T, " +
                         std::to_string(joints_) + ") input, got " + to_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t t = x.dim(2);
  const std::size_t c = config_.out_channels;

  if (config_.conventional) {
    const auto y = ops::pointwise_conv(x, stacked(theta_, 0, 3));
    const auto g = ops::graph_conv(y, stacked_adjacency(0, 3));
    const auto sum = ops::reduce(ops::reshape(g, {n, 3, c, t, joints_}), 1, ops::ReduceMode::kSum);
    return ops::reshape(sum, {n, 1, c, t, joints_});
  }

  const auto z = ops::pointwise_conv(x, phi_.tensor());
  const auto y = ops::pointwise_conv(z, stacked(theta_, 0, layers_ * 3));
  const auto g = ops::graph_conv(y, stacked_adjacency(0, layers_ * 3));
  const auto graph_part = ops::reshape(g, {n, layers_, 3 * reduced_, t, joints_});

  DiffTensor<T> edge_part;
  const Shape edge_shape{n, layers_, reduced_, t, joints_};
  if (config_.use_s_edgeconv) {
    const auto pooled = ops::reduce(z, 2, ops::ReduceMode::kMean);
    const auto e = ops::edge_conv(pooled, stacked(edge_, 0, layers_), neighbors_for(pooled));
    edge_part = ops::broadcast_to(ops::reshape(e, {n, layers_, reduced_, 1, joints_}), edge_shape);
  } else {
    edge_part = DiffTensor<T>::constant(edge_shape, T(0));
  }
  return ops::concat(std::vector<DiffTensor<T>>{graph_part, edge_part}, 2);
}

template <typename T>
void HDGCLayer<T>::collect(StateRefs<T>& out) {
  if (phi_.defined()) out.params.push_back(phi_);
  for (auto& p : theta_) out.params.push_back(p);
  for (auto& p : adjacency_) out.params.push_back(p);
  for (auto& p : edge_) out.params.push_back(p);
}

template class HDGCLayer<float>;
template class HDGCLayer<double>;

}  // namespace hdgcn::layers
