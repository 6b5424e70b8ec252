#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "hdgcn/core/diff_tensor.hpp"

namespace hdgcn {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries checked per input; 0 checks all of them.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input[index]" of the worst entry
  bool passed = true;
};

/// Compares the analytic gradient of `loss` with respect to each leaf in
/// `inputs` against central differences. `loss` must rebuild the graph from
/// the current leaf values on every call.
///
/// Per-entry error is |a - n| / max(|a|, |n|, 1e-3 * max|n|) with the max taken over
/// every checked entry of every input, so entries far below the gradient
/// scale do not dominate.
GradcheckResult gradcheck(const std::vector<std::shared_ptr<TapeNode<double>>>& inputs,
                          const std::function<DiffTensor<double>()>& loss,
                          const GradcheckOptions& options = {});

/// sum(out * R) for a fixed random R, reducing any output to a scalar whose
/// gradient exercises every output entry.
DiffTensor<double> random_projection(const DiffTensor<double>& out, std::uint64_t seed);

}  // namespace hdgcn
