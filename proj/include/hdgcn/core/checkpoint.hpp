#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hdgcn/core/shape.hpp"

namespace hdgcn {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// HDT1 container: "HDT1", u32 count, then per tensor u16 name length, name
/// bytes, u8 rank, u32 dims, f32 values. Little-endian throughout.
void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

std::vector<char> encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::vector<char>& bytes);

}  // namespace hdgcn
