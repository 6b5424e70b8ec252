#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hdgcn/core/shape.hpp"

namespace hdgcn {

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) values for a weight of `shape`.
template <typename T>
std::vector<T> fan_in_uniform(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = fan_in == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> out(numel(shape));
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace hdgcn
