#include "hdgcn/model/network.hpp"

#include <algorithm>
#include <charconv>
#include <map>

#include "hdgcn/core/error.hpp"
#include "hdgcn/core/init.hpp"

namespace hdgcn::model {

using layers::BatchNorm;
using layers::make_weight;
using layers::StateRefs;

int resolve_com(const skeleton::Topology& topology, const std::string& com) {
  int joint = 0;
  const auto [ptr, ec] = std::from_chars(com.data(), com.data() + com.size(), joint);
  if (ec == std::errc() && ptr == com.data() + com.size()) {
    if (joint < 1 || joint > topology.num_joints) {
      throw ConfigError("CoM joint " + com + " is not in topology " + topology.name);
    }
    return joint;
  }
  return topology.com_joint(skeleton::parse_com_role(com));
}

graph::Adjacency model_adjacency(const ModelConfig& config, const skeleton::Topology& topology,
                                 const graph::Decomposition& decomp) {
  const auto raw = config.graph == GraphKind::kConventional
                       ? graph::build_conventional(topology)
                       : graph::build_hd(topology, decomp, config.variant, config.direction);
  return graph::normalize(raw, config.norm_scope);
}

template <typename T>
TemporalModule<T>::TemporalModule(const std::string& name, std::size_t channels, std::size_t stride, bool batch_norm,
                                  std::mt19937_64& rng)
    : stride_(stride) {
  if (channels % 4 != 0) throw ConfigError(name + ": channels must be divisible by 4");
  if (stride != 1 && stride != 2) throw ConfigError(name + ": stride must be 1 or 2");
  const std::size_t width = channels / 4;
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string prefix = name + ".b" + std::to_string(b);
    Branch br;
    br.reduce = make_weight<T>(prefix + ".reduce", width, channels, rng);
    if (b < 3) br.reduce_bn = BatchNorm<T>(prefix + ".reduce_bn", width, batch_norm);
    if (b < 2) {
      const Shape shape{width, width, kKernel};
      br.conv = Parameter<T>(prefix + ".conv", shape, fan_in_uniform<T>(shape, width * kKernel, rng));
    }
    br.out_bn = BatchNorm<T>(prefix + ".bn", width, batch_norm);
    branches_.push_back(std::move(br));
  }
}

template <typename T>
DiffTensor<T> TemporalModule<T>::forward(const DiffTensor<T>& x, bool training) {
  std::vector<DiffTensor<T>> outs;
  for (std::size_t b = 0; b < 4; ++b) {
    auto& br = branches_[b];
    DiffTensor<T> y;
    if (b == 3) {
      y = ops::pointwise_conv(ops::subsample_frames(x, stride_), br.reduce.tensor());
    } else {
      y = ops::relu(br.reduce_bn.forward(ops::pointwise_conv(x, br.reduce.tensor()), training));
      y = b == 2 ? ops::max_pool_frames(y, 3, stride_) : ops::temporal_conv(y, br.conv.tensor(), b + 1, stride_);
    }
    outs.push_back(br.out_bn.forward(y, training));
  }
  return ops::concat(outs, 1);
}

template <typename T>
void TemporalModule<T>::collect(StateRefs<T>& out) {
  for (auto& br : branches_) {
    out.params.push_back(br.reduce);
    br.reduce_bn.collect(out);
    if (br.conv.defined()) out.params.push_back(br.conv);
    br.out_bn.collect(out);
  }
}

template <typename T>
Block<T>::Block(const std::string& name, std::size_t in, std::size_t out, std::size_t stride,
                const ModelConfig& config, const graph::Adjacency& adjacency, const graph::Decomposition& decomp,
                std::mt19937_64& rng)
    : in_(in), out_(out), stride_(stride) {
  layers::HDGCConfig gc;
  gc.in_channels = in;
  gc.out_channels = out;
  gc.conventional = config.graph == GraphKind::kConventional;
  gc.use_s_edgeconv = config.s_edgeconv && !gc.conventional;
  gc.knn_k = config.knn_k;
  gcn_ = layers::HDGCLayer<T>(name + ".gcn", gc, adjacency, rng);
  if (gc.conventional) {
    aha_ = layers::AHA<T>(name + ".aha", out, 1, adjacency.joints, config.aha, rng);
  } else {
    aha_ = layers::AHA<T>(name + ".aha", out, decomp, config.aha, rng);
  }
  gcn_bn_ = BatchNorm<T>(name + ".gcn_bn", out, config.batch_norm);
  if (in != out) {
    down_ = make_weight<T>(name + ".down", out, in, rng);
    down_bn_ = BatchNorm<T>(name + ".down_bn", out, config.batch_norm);
  }
  tcn_ = TemporalModule<T>(name + ".tcn", out, stride, config.batch_norm, rng);
  if (in != out || stride != 1) {
    residual_ = make_weight<T>(name + ".residual", out, in, rng);
    residual_bn_ = BatchNorm<T>(name + ".residual_bn", out, config.batch_norm);
  }
}

template <typename T>
DiffTensor<T> Block<T>::forward(const DiffTensor<T>& x, bool training) {
  auto spatial = gcn_bn_.forward(aha_.forward(gcn_.forward(x)), training);
  auto shortcut = down_.defined() ? down_bn_.forward(ops::pointwise_conv(x, down_.tensor()), training) : x;
  auto s = ops::relu(ops::add(spatial, shortcut));
  auto t = tcn_.forward(s, training);
  auto residual =
      residual_.defined()
          ? residual_bn_.forward(ops::pointwise_conv(ops::subsample_frames(x, stride_), residual_.tensor()), training)
          : x;
  return ops::relu(ops::add(t, residual));
}

template <typename T>
void Block<T>::collect(StateRefs<T>& out) {
  gcn_.collect(out);
  aha_.collect(out);
  gcn_bn_.collect(out);
  if (down_.defined()) {
    out.params.push_back(down_);
    down_bn_.collect(out);
  }
  tcn_.collect(out);
  if (residual_.defined()) {
    out.params.push_back(residual_);
    residual_bn_.collect(out);
  }
}

template <typename T>
Network<T>::Network(const ModelConfig& config, std::uint64_t seed)
    : config_(config), topology_(skeleton::resolve(config.topology)), dropout_rng_(seed ^ 0x9e3779b97f4a7c15ULL) {
  config_.validate();
  com_ = resolve_com(topology_, config_.com);
  decomp_ = graph::decompose(topology_, com_, config_.explicit_sets);
  const auto adjacency = model_adjacency(config_, topology_, decomp_);
  std::mt19937_64 rng(seed);
  input_bn_ = BatchNorm<T>("input_bn", config_.in_channels, config_.batch_norm);
  std::size_t in = config_.in_channels;
  for (std::size_t b = 0; b < config_.channels.size(); ++b) {
    blocks_.push_back(std::make_unique<Block<T>>("block" + std::to_string(b), in, config_.channels[b],
                                                 config_.strides[b], config_, adjacency, decomp_, rng));
    in = config_.channels[b];
  }
  classifier_ = layers::Linear<T>("fc", in, config_.num_classes, rng);
}

template <typename T>
DiffTensor<T> Network<T>::forward(const DiffTensor<T>& x, bool training) {
  const auto v = static_cast<std::size_t>(topology_.num_joints);
  if (x.rank() != 5 || x.dim(2) != config_.in_channels || x.dim(4) != v) {
    throw DataError("network: expected input (B, M, " + std::to_string(config_.in_channels) + ", T, " +
                    std::to_string(v) + ") for topology " + topology_.name + ", got " + to_string(x.shape()));
  }
  if (x.dim(3) != config_.window) {
    throw DataError("network: input has " + std::to_string(x.dim(3)) + " frames but the model window is " +
                    std::to_string(config_.window));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t persons = x.dim(1);
  auto h = ops::reshape(x, {batch * persons, x.dim(2), x.dim(3), v});
  h = input_bn_.forward(h, training);
  for (auto& block : blocks_) h = block->forward(h, training);
  const std::size_t c = h.dim(1);
  h = ops::reduce(ops::reshape(h, {batch * persons, c, h.dim(2) * v}), 2, ops::ReduceMode::kMean);
  h = ops::dropout(h, config_.dropout, dropout_rng_, training);
  auto logits = classifier_.forward(h);
  if (persons == 1) return logits;
  return ops::reduce(ops::reshape(logits, {batch, persons, config_.num_classes}), 1, ops::ReduceMode::kMean);
}

template <typename T>
StateRefs<T> Network<T>::state() {
  StateRefs<T> out;
  input_bn_.collect(out);
  for (auto& block : blocks_) block->collect(out);
  classifier_.collect(out);
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : state().params) n += p.numel();
  return n;
}

template <typename T>
std::vector<NamedTensor> Network<T>::state_dict() {
  auto refs = state();
  std::vector<NamedTensor> out;
  for (const auto& p : refs.params) {
    out.push_back({p.name(), p.shape(), std::vector<float>(p.values().begin(), p.values().end())});
  }
  for (const auto& [name, buf] : refs.buffers) {
    out.push_back({name, {buf->size()}, std::vector<float>(buf->begin(), buf->end())});
  }
  return out;
}

template <typename T>
void Network<T>::load_state_dict(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto find = [&](const std::string& name, const Shape& shape) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape != shape) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + to_string(it->second->shape) + ", expected " +
                      to_string(shape));
    }
    return *it->second;
  };
  auto refs = state();
  for (auto& p : refs.params) {
    const auto& t = find(p.name(), p.shape());
    std::copy(t.values.begin(), t.values.end(), p.values().begin());
  }
  for (auto& [name, buf] : refs.buffers) {
    const auto& t = find(name, {buf->size()});
    std::copy(t.values.begin(), t.values.end(), buf->begin());
  }
}

template <typename T>
std::vector<AttentionRecord> Network<T>::attention() {
  std::vector<AttentionRecord> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const auto& aha = blocks_[b]->aha();
    if (aha.last_attention().empty()) continue;
    out.push_back({b, aha.last_attention_shape(),
                   std::vector<double>(aha.last_attention().begin(), aha.last_attention().end())});
  }
  return out;
}

template <typename T>
void Network<T>::freeze_neighbors(bool on) {
  for (auto& block : blocks_) {
    block->gcn().freeze_neighbors(on);
    block->aha().freeze_neighbors(on);
  }
}

ComplexityReport complexity(const ModelConfig& config) {
  config.validate();
  const auto topology = skeleton::resolve(config.topology);
  const auto decomp = graph::decompose(topology, resolve_com(topology, config.com), config.explicit_sets);
  const std::uint64_t v = static_cast<std::uint64_t>(topology.num_joints);
  const bool conventional = config.graph == GraphKind::kConventional;
  const std::uint64_t layers = conventional ? 1 : decomp.num_layers();
  const std::uint64_t bn = config.batch_norm ? 2 : 0;

  std::uint64_t params = bn * config.in_channels;
  std::uint64_t macs = 0;       // shared by both conventions
  std::uint64_t edge_def = 0;   // EdgeConv counted per edge
  std::uint64_t edge_exec = 0;  // EdgeConv as executed
  std::uint64_t t = config.window;
  std::uint64_t in = config.in_channels;
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    const std::uint64_t c = config.channels[b];
    const std::uint64_t s = config.strides[b];
    const std::uint64_t tv = t * v;
    if (conventional) {
      params += 3 * c * in + 3 * v * v;
      macs += 3 * c * in * tv + 3 * c * t * v * v;
    } else {
      const std::uint64_t r = c / 4;
      params += r * in + layers * 3 * r * r + layers * 3 * v * v;
      macs += r * in * tv + layers * 3 * r * r * tv + layers * 3 * r * t * v * v;
      if (config.s_edgeconv) {
        params += layers * r * 2 * r;
        edge_def += layers * r * 2 * r * v * (config.knn_k + 1);
        edge_exec += 2 * layers * r * r * v;
      }
    }
    if (config.aha.pooling != layers::Pooling::kNone) {
      const std::uint64_t out = config.aha.scalar_attention ? 1 : c;
      if (config.aha.h_edgeconv) {
        params += out * 2 * c;
        edge_def += out * 2 * c * layers * (config.aha.h_knn_k + 1);
        edge_exec += 2 * out * c * layers;
      } else {
        params += out * c;
        macs += out * c * layers;
      }
    }
    params += bn * c;
    if (in != c) {
      params += c * in + bn * c;
      macs += c * in * tv;
    }
    const std::uint64_t w = c / 4;
    const std::uint64_t to = (t + s - 1) / s;
    params += 4 * c * w + 2 * w * w * TemporalModule<float>::kKernel + 7 * bn * w;
    macs += 3 * c * w * tv + c * w * to * v + 2 * w * w * TemporalModule<float>::kKernel * to * v;
    if (in != c || s != 1) {
      params += c * in + bn * c;
      macs += c * in * to * v;
    }
    t = to;
    in = c;
  }
  params += in * config.num_classes + config.num_classes;
  macs += in * config.num_classes;

  ComplexityReport r;
  r.params = params;
  r.flops = 2 * (macs + edge_def);
  r.flops_executed = 2 * (macs + edge_exec);
  r.window = config.window;
  r.joints = static_cast<std::size_t>(v);
  r.classes = config.num_classes;
  r.convention =
      "FLOPs = 2 x multiply-accumulates of convolutions, graph products, EdgeConv and the classifier for one "
      "person; batch norm, activations, pooling and additions excluded; EdgeConv counted as a (C_out, 2C) map on "
      "each of the k+1 edges per point (flops) or as executed via two (C_out, C) products per point "
      "(flops_executed)";
  return r;
}

nlohmann::json to_json(const ComplexityReport& r) {
  return {{"params", r.params},
          {"flops", r.flops},
          {"gflops", static_cast<double>(r.flops) / 1e9},
          {"flops_executed", r.flops_executed},
          {"params_millions", static_cast<double>(r.params) / 1e6},
          {"window", r.window},
          {"joints", r.joints},
          {"classes", r.classes},
          {"convention", r.convention}};
}

template class TemporalModule<float>;
template class TemporalModule<double>;
template class Block<float>;
template class Block<double>;
template class Network<float>;
template class Network<double>;

}  // namespace hdgcn::model
