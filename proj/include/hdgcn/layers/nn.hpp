#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hdgcn/core/diff_tensor.hpp"
#include "hdgcn/core/ops.hpp"

namespace hdgcn::layers {

/// Named persistent state of a module: trainable parameters plus
/// non-trainable buffers such as running statistics.
template <typename T>
struct StateRefs {
  std::vector<Parameter<T>> params;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels, bool enabled = true);

  DiffTensor<T> forward(const DiffTensor<T>& x, bool training);
  void collect(StateRefs<T>& out);
  bool enabled() const { return enabled_; }
  std::size_t channels() const { return stats_.running_mean.size(); }
  Parameter<T>& gamma() { return gamma_; }

 private:
  std::string name_;
  bool enabled_ = false;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  ops::BatchNormStats<T> stats_;
};

/// Weight (C_out, C_in) with fan-in uniform init.
template <typename T>
Parameter<T> make_weight(const std::string& name, std::size_t out, std::size_t in, std::mt19937_64& rng);

/// x (N, C) -> (N, K) with weight stored (C, K) and bias (K).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  DiffTensor<T> forward(const DiffTensor<T>& x) const;
  void collect(StateRefs<T>& out);

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
};

}  // namespace hdgcn::layers
