#include <cmath>
#include <cstring>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "hdgcn/core/checkpoint.hpp"
#include "hdgcn/core/error.hpp"
#include "hdgcn/core/gradcheck.hpp"
#include "hdgcn/core/ops.hpp"
#include "hdgcn/model/gradcheck_suite.hpp"

using namespace hdgcn;
using D = DiffTensor<double>;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

D random_tensor(const Shape& shape, std::uint64_t seed, bool grad = false) {
  return D::leaf(shape, random_values(numel(shape), seed), grad);
}

}  // namespace

TEST_CASE("broadcast shapes follow trailing alignment") {
  CHECK(broadcast_shapes({2, 3, 4}, {3, 1}) == Shape{2, 3, 4});
  CHECK(broadcast_shapes({1}, {5, 2}) == Shape{5, 2});
  CHECK_THROWS_AS(broadcast_shapes({2, 3}, {4, 3}), DimensionError);
}

TEST_CASE("matmul matches a triple loop") {
  const auto a = random_tensor({2, 3, 4}, 1);
  const auto b = random_tensor({4, 5}, 2);
  const auto c = ops::matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 5});
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < 4; ++k) acc += a.values()[(n * 3 + i) * 4 + k] * b.values()[k * 5 + j];
        CHECK(c.values()[(n * 3 + i) * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("temporal_conv matches direct dilated strided convolution") {
  for (std::size_t dilation : {1u, 2u}) {
    for (std::size_t stride : {1u, 2u}) {
      const std::size_t N = 2, Ci = 3, Co = 2, T = 9, V = 4, K = 5;
      const auto x = random_tensor({N, Ci, T, V}, 10 + dilation);
      const auto w = random_tensor({Co, Ci, K}, 20 + stride);
      const auto y = ops::temporal_conv(x, w, dilation, stride);
      const std::size_t pad = dilation * (K - 1) / 2;
      const std::size_t To = (T + stride - 1) / stride;
      REQUIRE(y.shape() == Shape{N, Co, To, V});
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < Co; ++o) {
          for (std::size_t t = 0; t < To; ++t) {
            for (std::size_t v = 0; v < V; ++v) {
              double acc = 0.0;
              for (std::size_t c = 0; c < Ci; ++c) {
                for (std::size_t k = 0; k < K; ++k) {
                  const long src = static_cast<long>(t * stride + k * dilation) - static_cast<long>(pad);
                  if (src < 0 || src >= static_cast<long>(T)) continue;
                  acc += w.values()[(o * Ci + c) * K + k] * x.values()[((n * Ci + c) * T + src) * V + v];
                }
              }
              CHECK(y.values()[((n * Co + o) * To + t) * V + v] == doctest::Approx(acc).epsilon(1e-12));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("max_pool_frames matches a windowed max") {
  const auto x = random_tensor({1, 2, 7, 3}, 3);
  const auto y = ops::max_pool_frames(x, 3, 2);
  REQUIRE(y.shape() == Shape{1, 2, 4, 3});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t v = 0; v < 3; ++v) {
        double best = -INFINITY;
        for (long s = static_cast<long>(2 * t) - 1; s <= static_cast<long>(2 * t) + 1; ++s) {
          if (s >= 0 && s < 7) best = std::max(best, x.values()[(c * 7 + s) * 3 + v]);
        }
        CHECK(y.values()[(c * 4 + t) * 3 + v] == best);
      }
    }
  }
}

TEST_CASE("batch_norm in training mode standardizes each channel") {
  const auto x = random_tensor({4, 3, 5}, 4);
  const auto gamma = D::constant({3}, 1.0);
  const auto beta = D::constant({3}, 0.0);
  ops::BatchNormStats<double> stats(3);
  const auto y = ops::batch_norm(x, gamma, beta, stats, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 5; ++i) {
        mean += y.values()[(n * 3 + c) * 5 + i];
        xm += x.values()[(n * 3 + c) * 5 + i];
      }
    }
    mean /= 20.0;
    xm /= 20.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 5; ++i) {
        var += std::pow(y.values()[(n * 3 + c) * 5 + i] - mean, 2);
        xv += std::pow(x.values()[(n * 3 + c) * 5 + i] - xm, 2);
      }
    }
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    // Biased variance with eps in the denominator.
    CHECK(var / 20.0 == doctest::Approx((xv / 20.0) / (xv / 20.0 + 1e-5)).epsilon(1e-9));
    CHECK(stats.running_mean[c] == doctest::Approx(0.1 * xm).epsilon(1e-12));
  }
}

TEST_CASE("softmax cross-entropy equals the log-sum-exp formula") {
  const auto z = random_tensor({3, 4}, 5);
  const std::vector<int> labels{2, 0, 3};
  const auto loss = ops::softmax_cross_entropy(z, std::span<const int>(labels));
  double expected = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    double lse = 0.0;
    for (std::size_t k = 0; k < 4; ++k) lse += std::exp(z.values()[n * 4 + k]);
    expected += std::log(lse) - z.values()[n * 4 + static_cast<std::size_t>(labels[n])];
  }
  CHECK(loss.item() == doctest::Approx(expected / 3.0).epsilon(1e-12));
}

TEST_CASE("knn returns the point itself then its k brute-force nearest neighbors") {
  const auto x = random_tensor({2, 3, 7}, 6);
  const auto nb = ops::knn(x, 3);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 7; ++i) {
      auto dist = [&](std::size_t j) {
        double d = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          d += std::pow(x.values()[(n * 3 + c) * 7 + i] - x.values()[(n * 3 + c) * 7 + j], 2);
        }
        return d;
      };
      std::vector<std::size_t> order(7);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dist(a) < dist(b); });
      const auto got = nb.of(n, i);
      REQUIRE(got.size() == 4);
      CHECK(static_cast<std::size_t>(got[0]) == i);
      for (std::size_t k = 0; k < 4; ++k) CHECK(static_cast<std::size_t>(got[k]) == order[k]);
    }
  }
}

TEST_CASE("edge_conv equals the definitional max over W [x_i, x_j - x_i]") {
  const std::size_t C = 3, P = 6, O = 4;
  const auto x = random_tensor({1, C, P}, 7);
  const auto w = random_tensor({O, 2 * C}, 8);
  const auto nb = ops::knn(x, 3);
  const auto y = ops::edge_conv(x, w, nb);
  REQUIRE(y.shape() == Shape{1, O, P});
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t o = 0; o < O; ++o) {
      double best = -INFINITY;
      for (auto j : nb.of(0, i)) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double xi = x.values()[c * P + i];
          const double xj = x.values()[c * P + static_cast<std::size_t>(j)];
          acc += w.values()[o * 2 * C + c] * xi + w.values()[o * 2 * C + C + c] * (xj - xi);
        }
        best = std::max(best, acc);
      }
      CHECK(y.values()[o * P + i] == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("graph_conv aggregates sources into targets per group") {
  const auto x = random_tensor({1, 4, 2, 3}, 9);
  const auto a = random_tensor({2, 3, 3}, 10);
  const auto y = ops::graph_conv(x, a);
  for (std::size_t ch = 0; ch < 4; ++ch) {
    const std::size_t g = ch / 2;
    for (std::size_t t = 0; t < 2; ++t) {
      for (std::size_t i = 0; i < 3; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 3; ++j) acc += a.values()[(g * 3 + i) * 3 + j] * x.values()[(ch * 2 + t) * 3 + j];
        CHECK(y.values()[(ch * 2 + t) * 3 + i] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("dropout is identity at inference and keeps expectation in training") {
  std::mt19937_64 rng(1);
  const auto x = D::constant({10000}, 1.0);
  CHECK(ops::dropout(x, 0.5, rng, false).values()[0] == 1.0);
  const auto y = ops::dropout(x, 0.5, rng, true);
  double sum = 0.0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == 2.0));
    sum += v;
  }
  CHECK(sum / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("backward accumulates through shared subexpressions") {
  auto x = D::leaf({1}, {3.0}, true);
  const auto y = ops::add(ops::mul(x, x), x);  // x^2 + x
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("every op passes gradcheck on 20 random instances") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    for (const auto& c : model::gradcheck_suite(seed)) {
      if (c.module != "ops") continue;
      const auto r = c.run({});
      INFO(c.name << " seed " << seed << " worst " << r.worst);
      CHECK(r.max_rel_error <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 20 * 20);
}

TEST_CASE("gradcheck flags a wrong gradient") {
  // A function whose recorded backward is deliberately wrong.
  auto x = D::leaf({3}, {0.5, -0.2, 0.9}, true);
  auto wrong = [&] {
    auto y = ops::mul(x, x);
    return make_result<double>({1}, {y.values()[0] + y.values()[1] + y.values()[2]}, {x.node_ptr()},
                               [](TapeNode<double>& self) {
                                 for (auto& g : self.inputs[0]->grad) g += self.grad[0];  // should be 2x
                               });
  };
  const auto r = gradcheck({x.node_ptr()}, wrong);
  CHECK_FALSE(r.passed);
}

TEST_CASE("HDT1 round trip is bit exact and rejects truncation") {
  std::vector<NamedTensor> tensors{{"a.weight", {2, 3}, {1.5f, -0.0f, 3.25f, 1e-30f, -7.0f, 0.1f}},
                                   {"b", {}, {42.0f}},
                                   {"empty", {0}, {}}};
  const auto bytes = encode_tensors(tensors);
  const auto back = decode_tensors(bytes);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].shape == tensors[i].shape);
    CHECK(std::memcmp(back[i].values.data(), tensors[i].values.data(), tensors[i].values.size() * 4) == 0);
  }
  CHECK(encode_tensors(back) == bytes);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_tensors(cut), DataError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_tensors(extra), DataError);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HDT1");
}

TEST_CASE("mac counter counts m*n*k of a forward matmul") {
  const auto a = random_tensor({3, 4}, 11);
  const auto b = random_tensor({4, 5}, 12);
  ops::mac_counter() = 0;
  ops::matmul(a, b);
  CHECK(ops::mac_counter() == 3u * 4u * 5u);
}
