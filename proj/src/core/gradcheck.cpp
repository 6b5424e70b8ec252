#include "hdgcn/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdgcn/core/error.hpp"
#include "hdgcn/core/ops.hpp"

namespace hdgcn {

GradcheckResult gradcheck(const std::vector<std::shared_ptr<TapeNode<double>>>& inputs,
                          const std::function<DiffTensor<double>()>& loss, const GradcheckOptions& options) {
  for (const auto& in : inputs) {
    if (!in->requires_grad) throw ConfigError("gradcheck: input '" + in->name + "' does not require grad");
    std::fill(in->grad.begin(), in->grad.end(), 0.0);
    in->ensure_grad();
  }
  const auto out = loss();
  if (out.numel() != 1) throw DimensionError("gradcheck: loss must be a scalar");
  out.backward();

  std::mt19937_64 rng(options.seed);
  struct Entry {
    std::size_t input;
    std::size_t index;
    double analytic;
    double numeric;
  };
  std::vector<Entry> entries;
  double scale = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& node = *inputs[k];
    const std::vector<double> analytic = node.grad;
    std::vector<std::size_t> picked(node.value.size());
    std::iota(picked.begin(), picked.end(), 0);
    if (options.max_entries != 0 && picked.size() > options.max_entries) {
      std::shuffle(picked.begin(), picked.end(), rng);
      picked.resize(options.max_entries);
      std::sort(picked.begin(), picked.end());
    }
    for (std::size_t i : picked) {
      double& x = node.value[i];
      const double saved = x;
      x = saved + options.step;
      const double up = loss().item();
      x = saved - options.step;
      const double down = loss().item();
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      scale = std::max(scale, std::abs(numeric));
      entries.push_back({k, i, analytic[i], numeric});
    }
  }
  // The floor is relative to the largest gradient of the whole check.
  const double floor = std::max(1e-3 * scale, 1e-12);
  GradcheckResult result;
  for (const auto& e : entries) {
    const double err = std::abs(e.analytic - e.numeric) / std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    ++result.checked;
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      const auto& node = *inputs[e.input];
      const std::string name = node.name.empty() ? "input" + std::to_string(e.input) : node.name;
      result.worst = name + "[" + std::to_string(e.index) + "]";
    }
  }
  result.passed = result.max_rel_error <= options.tolerance;
  return result;
}

DiffTensor<double> random_projection(const DiffTensor<double>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> r(out.numel());
  for (auto& v : r) v = dist(rng);
  auto prod = ops::mul(out, DiffTensor<double>::constant(out.shape(), std::move(r)));
  auto flat = ops::reshape(prod, {prod.numel()});
  return ops::reduce(flat, 0, ops::ReduceMode::kSum);
}

}  // namespace hdgcn
