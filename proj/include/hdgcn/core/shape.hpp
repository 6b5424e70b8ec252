#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hdgcn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Row-major strides for a contiguous array of the given shape.
std::vector<std::size_t> contiguous_strides(const Shape& shape);

/// Numpy-style broadcast of two shapes. Throws DimensionError when a pair of
/// dimensions differs and neither is 1.
Shape broadcast_shapes(const Shape& a, const Shape& b);

}  // namespace hdgcn
