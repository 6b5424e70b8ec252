#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hdgcn/core/gradcheck.hpp"

namespace hdgcn::model {

struct GradcheckCase {
  std::string module;  // "ops", "layers" or "model"
  std::string name;
  std::function<GradcheckResult(const GradcheckOptions&)> run;
};

/// Finite-difference checks of every differentiable op on random inputs, of
/// each layer type and of the micro network, all at 64-bit. Neighbor lists
/// are frozen so the checked functions are fixed.
std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed);

}  // namespace hdgcn::model
