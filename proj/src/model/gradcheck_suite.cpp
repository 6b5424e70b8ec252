#include "hdgcn/model/gradcheck_suite.hpp"

#include <memory>
#include <random>

#include "hdgcn/core/ops.hpp"
#include "hdgcn/model/network.hpp"

namespace hdgcn::model {
namespace {

using D = DiffTensor<double>;
using Nodes = std::vector<std::shared_ptr<TapeNode<double>>>;

struct Rand {
  std::mt19937_64 rng;
  explicit Rand(std::uint64_t seed) : rng(seed) {}

  D leaf(const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = u(rng);
    return D::leaf(shape, std::move(v), true);
  }
  // Values kept away from zero, for inputs to kinked functions.
  D away(const Shape& shape) {
    auto t = leaf(shape, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& x : t.mutable_values()) x = sign(rng) ? x : -x;
    return t;
  }
};

GradcheckResult check(const Nodes& inputs, const std::function<D()>& out, const GradcheckOptions& options,
                      std::uint64_t seed) {
  return gradcheck(inputs, [&] { return random_projection(out(), seed); }, options);
}

template <typename Fn>
GradcheckCase op_case(const std::string& name, std::uint64_t seed, Fn build) {
  return {"ops", name, [name, seed, build](const GradcheckOptions& options) {
            Rand r(seed);
            Nodes inputs;
            std::function<D()> out;
            build(r, inputs, out);
            return check(inputs, out, options, seed + 1);
          }};
}

template <typename Module>
Nodes params_of(Module& m) {
  layers::StateRefs<double> refs;
  m.collect(refs);
  Nodes out;
  for (auto& p : refs.params) out.push_back(p.tensor().node_ptr());
  return out;
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradcheckCase> cases;
  std::uint64_t s = seed * 1000;

  cases.push_back(op_case("add_broadcast", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 3, 4}), b = r.leaf({3, 1});
    in = {a.node_ptr(), b.node_ptr()};
    out = [=] { return ops::add(a, b); };
  }));
  cases.push_back(op_case("sub_broadcast", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 1, 4}), b = r.leaf({2, 3, 4});
    in = {a.node_ptr(), b.node_ptr()};
    out = [=] { return ops::sub(a, b); };
  }));
  cases.push_back(op_case("mul_broadcast", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 3, 4}), b = r.leaf({1, 3, 1});
    in = {a.node_ptr(), b.node_ptr()};
    out = [=] { return ops::mul(a, b); };
  }));
  cases.push_back(op_case("scale", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({3, 5});
    in = {a.node_ptr()};
    out = [=] { return ops::scale(a, -1.7); };
  }));
  cases.push_back(op_case("reshape", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 6});
    in = {a.node_ptr()};
    out = [=] { return ops::reshape(a, {3, 2, 2}); };
  }));
  cases.push_back(op_case("permute", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 3, 4});
    in = {a.node_ptr()};
    out = [=] { return ops::permute(a, {2, 0, 1}); };
  }));
  cases.push_back(op_case("broadcast_to", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({3, 1, 2});
    in = {a.node_ptr()};
    out = [=] { return ops::broadcast_to(a, {2, 3, 4, 2}); };
  }));
  cases.push_back(op_case("concat", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 1, 3}), b = r.leaf({2, 2, 3});
    in = {a.node_ptr(), b.node_ptr()};
    out = [=] { return ops::concat<double>({a, b}, 1); };
  }));
  cases.push_back(op_case("matmul_batched", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({2, 3, 4}), b = r.leaf({4, 5});
    in = {a.node_ptr(), b.node_ptr()};
    out = [=] { return ops::matmul(a, b); };
  }));
  cases.push_back(op_case("graph_conv", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 4, 3, 5}), a = r.leaf({2, 5, 5});
    in = {x.node_ptr(), a.node_ptr()};
    out = [=] { return ops::graph_conv(x, a); };
  }));
  cases.push_back(op_case("weighted_sum", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 3, 4, 2, 3}), w = r.leaf({2, 3, 4}), w1 = r.leaf({2, 3, 1});
    in = {x.node_ptr(), w.node_ptr(), w1.node_ptr()};
    out = [=] { return ops::add(ops::weighted_sum(x, w), ops::weighted_sum(x, w1)); };
  }));
  for (auto mode : {ops::ReduceMode::kMean, ops::ReduceMode::kSum, ops::ReduceMode::kMax}) {
    const std::string label = mode == ops::ReduceMode::kMean ? "mean" : mode == ops::ReduceMode::kSum ? "sum" : "max";
    cases.push_back(op_case("reduce_" + label, ++s, [mode](Rand& r, Nodes& in, std::function<D()>& out) {
      auto a = r.leaf({2, 4, 3});
      in = {a.node_ptr()};
      out = [=] { return ops::reduce(a, 1, mode); };
    }));
  }
  cases.push_back(op_case("relu", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.away({3, 7});
    in = {a.node_ptr()};
    out = [=] { return ops::relu(a); };
  }));
  cases.push_back(op_case("sigmoid", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto a = r.leaf({3, 7}, -3.0, 3.0);
    in = {a.node_ptr()};
    out = [=] { return ops::sigmoid(a); };
  }));
  cases.push_back(op_case("pointwise_conv", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 3, 4, 5}), w = r.leaf({6, 3});
    in = {x.node_ptr(), w.node_ptr()};
    out = [=] { return ops::pointwise_conv(x, w); };
  }));
  cases.push_back(op_case("subsample_frames", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 3, 7, 2});
    in = {x.node_ptr()};
    out = [=] { return ops::subsample_frames(x, 2); };
  }));
  cases.push_back(op_case("temporal_conv_dilated_strided", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 3, 9, 2}), w = r.leaf({2, 3, 5});
    in = {x.node_ptr(), w.node_ptr()};
    out = [=] { return ops::temporal_conv(x, w, 2, 2); };
  }));
  cases.push_back(op_case("max_pool_frames", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 2, 8, 3});
    in = {x.node_ptr()};
    out = [=] { return ops::max_pool_frames(x, 3, 2); };
  }));
  cases.push_back(op_case("batch_norm_training", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({3, 4, 5}), g = r.leaf({4}, 0.5, 1.5), b = r.leaf({4});
    in = {x.node_ptr(), g.node_ptr(), b.node_ptr()};
    auto stats = std::make_shared<ops::BatchNormStats<double>>(4);
    out = [=] { return ops::batch_norm(x, g, b, *stats, true); };
  }));
  cases.push_back(op_case("batch_norm_inference", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({3, 4, 5}), g = r.leaf({4}, 0.5, 1.5), b = r.leaf({4});
    in = {x.node_ptr(), g.node_ptr(), b.node_ptr()};
    auto stats = std::make_shared<ops::BatchNormStats<double>>(4);
    stats->running_mean = {0.1, -0.2, 0.3, 0.0};
    stats->running_var = {0.5, 1.5, 2.0, 1.0};
    out = [=] { return ops::batch_norm(x, g, b, *stats, false); };
  }));
  cases.push_back({"ops", "softmax_cross_entropy", [seed = ++s](const GradcheckOptions& options) {
                     Rand r(seed);
                     auto z = r.leaf({4, 5}, -2.0, 2.0);
                     const std::vector<int> labels{0, 3, 4, 1};
                     return gradcheck({z.node_ptr()},
                                      [=] { return ops::softmax_cross_entropy(z, std::span<const int>(labels), 0.1); },
                                      options);
                   }});
  cases.push_back(op_case("edge_conv", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({2, 3, 6}), w = r.leaf({4, 6});
    in = {x.node_ptr(), w.node_ptr()};
    const auto nbrs = std::make_shared<ops::NeighborLists>(ops::knn(x, 3));
    out = [=] { return ops::edge_conv(x, w, *nbrs); };
  }));
  cases.push_back(op_case("dropout", ++s, [](Rand& r, Nodes& in, std::function<D()>& out) {
    auto x = r.leaf({4, 6});
    in = {x.node_ptr()};
    out = [=] {
      std::mt19937_64 rng(7);
      return ops::dropout(x, 0.3, rng, true);
    };
  }));

  auto micro = preset("micro");
  const auto topo = skeleton::resolve(micro.topology);
  const auto decomp = graph::decompose(topo, resolve_com(topo, micro.com), micro.explicit_sets);
  const auto adjacency = model_adjacency(micro, topo, decomp);

  for (bool conventional : {false, true}) {
    cases.push_back({"layers", conventional ? "hdgc_conventional" : "hdgc_hd",
                     [=, seed = ++s](const GradcheckOptions& options) {
                       std::mt19937_64 rng(seed);
                       layers::HDGCConfig c{4, 8, conventional, !conventional, 2};
                       auto adj = conventional ? graph::normalize(graph::build_conventional(topo)) : adjacency;
                       auto layer = std::make_shared<layers::HDGCLayer<double>>("g", c, adj, rng);
                       layer->freeze_neighbors(true);
                       Rand r(seed + 1);
                       auto x = r.leaf({2, 4, 3, 5});
                       auto inputs = params_of(*layer);
                       inputs.push_back(x.node_ptr());
                       return check(inputs, [=] { return layer->forward(x); }, options, seed + 2);
                     }});
  }
  for (auto pooling : {layers::Pooling::kSAP, layers::Pooling::kRSAP}) {
    for (bool hedge : {false, true}) {
      const std::string label = layers::to_string(pooling) + (hedge ? "_hedge" : "");
      cases.push_back({"layers", "aha_" + label, [=, seed = ++s](const GradcheckOptions& options) {
                         std::mt19937_64 rng(seed);
                         layers::AHAConfig c;
                         c.pooling = pooling;
                         c.h_edgeconv = hedge;
                         c.h_knn_k = 1;
                         auto aha = std::make_shared<layers::AHA<double>>("a", 4, decomp, c, rng);
                         aha->freeze_neighbors(true);
                         Rand r(seed + 1);
                         auto stack = r.leaf({2, decomp.num_layers(), 4, 3, 5});
                         auto inputs = params_of(*aha);
                         inputs.push_back(stack.node_ptr());
                         return check(inputs, [=] { return aha->forward(stack); }, options, seed + 2);
                       }});
    }
  }
  cases.push_back({"layers", "temporal_module", [=, seed = ++s](const GradcheckOptions& options) {
                     std::mt19937_64 rng(seed);
                     auto tcn = std::make_shared<TemporalModule<double>>("t", 8, 2, true, rng);
                     Rand r(seed + 1);
                     auto x = r.leaf({2, 8, 8, 3});
                     auto inputs = params_of(*tcn);
                     inputs.push_back(x.node_ptr());
                     return check(inputs, [=] { return tcn->forward(x, true); }, options, seed + 2);
                   }});
  cases.push_back({"model", "micro_network", [=, seed = ++s](const GradcheckOptions& options) {
                     auto net = std::make_shared<Network<double>>(micro, seed);
                     net->freeze_neighbors(true);
                     // Adjacency rows outside a layer's sets start at exactly zero, so those
                     // features tie across frames under max pooling. Move off that kink.
                     std::mt19937_64 jitter(seed + 3);
                     std::uniform_real_distribution<double> u(-0.05, 0.05);
                     for (auto& p : net->parameters()) {
                       if (p.name().find(".adj.") == std::string::npos) continue;
                       for (auto& v : p.values()) v += u(jitter);
                     }
                     Rand r(seed + 1);
                     auto x = r.leaf({2, 1, micro.in_channels, micro.window, 5});
                     const std::vector<int> labels{0, 2};
                     Nodes inputs;
                     for (auto& p : net->parameters()) inputs.push_back(p.tensor().node_ptr());
                     inputs.push_back(x.node_ptr());
                     return gradcheck(
                         inputs,
                         [=] { return ops::softmax_cross_entropy(net->forward(x, true), std::span<const int>(labels)); },
                         options);
                   }});
  return cases;
}

}  // namespace hdgcn::model
