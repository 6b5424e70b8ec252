#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>

namespace hdgcn::ops {
std::uint64_t& mac_counter();
}

namespace hdgcn::detail {

/// C (M x N) = or += op(A) * op(B), all row-major. With trans_a, A is stored
/// K x M; with trans_b, B is stored N x K.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<const Mat>;
  const auto rows = static_cast<Eigen::Index>(m);
  const auto cols = static_cast<Eigen::Index>(n);
  const auto inner = static_cast<Eigen::Index>(k);
  ops::mac_counter() += static_cast<std::uint64_t>(m) * n * k;
  Eigen::Map<Mat> out(c, rows, cols);
  if (!accumulate) out.setZero();
  if (!trans_a && !trans_b) {
    out.noalias() += Map(a, rows, inner) * Map(b, inner, cols);
  } else if (!trans_a && trans_b) {
    out.noalias() += Map(a, rows, inner) * Map(b, cols, inner).transpose();
  } else if (trans_a && !trans_b) {
    out.noalias() += Map(a, inner, rows).transpose() * Map(b, inner, cols);
  } else {
    out.noalias() += Map(a, inner, rows).transpose() * Map(b, cols, inner).transpose();
  }
}

}  // namespace hdgcn::detail
