#include "hdgcn/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hdgcn/core/error.hpp"

namespace hdgcn {
namespace {

static_assert(std::endian::native == std::endian::little, "HDT1 I/O assumes a little-endian host");

template <typename U>
void put(std::vector<char>& out, U v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("HDT1: truncated container");
  }

  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<char> out{'H', 'D', 'T', '1'};
  put(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw DataError("HDT1: tensor name too long: " + t.name.substr(0, 40));
    if (t.shape.size() > 0xFF) throw DataError("HDT1: rank too large for " + t.name);
    if (numel(t.shape) != t.values.size()) throw DimensionError("HDT1: shape/value mismatch for " + t.name);
    put(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) put(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<char>& bytes) {
  Reader in(bytes);
  if (in.get_string(4) != "HDT1") throw DataError("HDT1: bad magic");
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.get_string(in.get<std::uint16_t>());
    const auto rank = in.get<std::uint8_t>();
    for (std::uint8_t r = 0; r < rank; ++r) t.shape.push_back(in.get<std::uint32_t>());
    t.values.resize(numel(t.shape));
    for (auto& v : t.values) v = in.get<float>();
    tensors.push_back(std::move(t));
  }
  if (!in.done()) throw DataError("HDT1: trailing bytes after last tensor");
  return tensors;
}

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_tensors(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensors(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace hdgcn
