#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hdgcn/core/diff_tensor.hpp"

// Differentiable operations over DiffTensor. Layouts are row-major; feature
// maps use (batch, channel, frame, joint) unless stated otherwise.
namespace hdgcn::ops {

enum class ReduceMode { kMean, kMax, kSum };
enum class Activation { kRelu, kSigmoid };

// Elementwise with numpy broadcasting.
template <typename T> DiffTensor<T> add(const DiffTensor<T>& a, const DiffTensor<T>& b);
template <typename T> DiffTensor<T> sub(const DiffTensor<T>& a, const DiffTensor<T>& b);
template <typename T> DiffTensor<T> mul(const DiffTensor<T>& a, const DiffTensor<T>& b);
template <typename T> DiffTensor<T> scale(const DiffTensor<T>& x, T factor);

template <typename T> DiffTensor<T> reshape(const DiffTensor<T>& x, Shape shape);
template <typename T>
DiffTensor<T> permute(const DiffTensor<T>& x, const std::vector<std::size_t>& order);
template <typename T> DiffTensor<T> broadcast_to(const DiffTensor<T>& x, const Shape& shape);
template <typename T>
DiffTensor<T> concat(const std::vector<DiffTensor<T>>& parts, std::size_t axis);

/// Graph product per channel group: x (N, G*C, T, V), adjacency (G, V, V)
/// with entry [target, source]; out[n, g*C + c, t, :] = A_g x[n, g*C + c, t, :].
template <typename T>
DiffTensor<T> graph_conv(const DiffTensor<T>& x, const DiffTensor<T>& adjacency);

/// Sum over axis 1 of x (N, L, C, ...) weighted by w (N, L, C): (N, C, ...).
template <typename T>
DiffTensor<T> weighted_sum(const DiffTensor<T>& x, const DiffTensor<T>& weights);

/// Matrix product over the last two axes, broadcasting the leading axes.
template <typename T> DiffTensor<T> matmul(const DiffTensor<T>& a, const DiffTensor<T>& b);

/// Removes `axis`. Max routes the gradient to the first arg-max.
template <typename T> DiffTensor<T> reduce(const DiffTensor<T>& x, std::size_t axis, ReduceMode mode);

template <typename T> DiffTensor<T> activation(const DiffTensor<T>& x, Activation kind);
template <typename T> DiffTensor<T> relu(const DiffTensor<T>& x) { return activation(x, Activation::kRelu); }
template <typename T> DiffTensor<T> sigmoid(const DiffTensor<T>& x) { return activation(x, Activation::kSigmoid); }

/// x: (N, C_in, ...), weight: (C_out, C_in) -> (N, C_out, ...).
template <typename T>
DiffTensor<T> pointwise_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight);

/// Keeps frames 0, s, 2s, ... of x: (N, C, T, V).
template <typename T> DiffTensor<T> subsample_frames(const DiffTensor<T>& x, std::size_t stride);

/// Convolution along the frame axis, shared over joints.
/// x: (N, C_in, T, V), weight: (C_out, C_in, K) with K odd. Zero padding of
/// dilation*(K-1)/2 on both sides gives ceil(T/stride) output frames.
template <typename T>
DiffTensor<T> temporal_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight,
                            std::size_t dilation, std::size_t stride);

/// Max pooling along frames with -inf padding of (kernel-1)/2.
template <typename T>
DiffTensor<T> max_pool_frames(const DiffTensor<T>& x, std::size_t kernel, std::size_t stride);

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

/// Normalizes over every axis except axis 1. In training mode uses batch
/// statistics and updates the running estimates.
template <typename T>
DiffTensor<T> batch_norm(const DiffTensor<T>& x, const DiffTensor<T>& gamma,
                         const DiffTensor<T>& beta, BatchNormStats<T>& stats, bool training);

/// Mean cross-entropy of logits (N, K) against integer labels.
template <typename T>
DiffTensor<T> softmax_cross_entropy(const DiffTensor<T>& logits, std::span<const int> labels,
                                    T label_smoothing = T(0));

/// Row-wise softmax of a (rows, cols) array. Not differentiable.
template <typename T>
std::vector<T> softmax_rows(std::span<const T> logits, std::size_t rows, std::size_t cols);

/// Neighbor lists for a batch of point sets; entry (n, i) holds `per_point`
/// indices with the point itself first.
struct NeighborLists {
  std::size_t batch = 0;
  std::size_t points = 0;
  std::size_t per_point = 0;
  std::vector<std::int32_t> index;

  std::span<const std::int32_t> of(std::size_t n, std::size_t i) const {
    return std::span<const std::int32_t>(index).subspan((n * points + i) * per_point, per_point);
  }
};

/// For x: (N, C, P) picks, per point, the k nearest other points by Euclidean
/// distance (ties to the lower index) and prepends the point itself.
template <typename T> NeighborLists knn(const DiffTensor<T>& x, std::size_t k);

/// EdgeConv over fixed neighbor lists: for each point i the edge feature
/// [x_i ; x_j - x_i] is mapped by weight (C_out, 2C) and max-reduced over the
/// neighbors j of i. x: (N, C, P) -> (N, C_out, P).
template <typename T>
DiffTensor<T> edge_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight,
                        const NeighborLists& neighbors);

/// Running count of multiply-accumulates performed by matrix products on this
/// thread, forward and backward. Reset by assigning 0.
std::uint64_t& mac_counter();

template <typename T>
DiffTensor<T> dropout(const DiffTensor<T>& x, double p, std::mt19937_64& rng, bool training);

}  // namespace hdgcn::ops
