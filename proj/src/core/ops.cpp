#include "hdgcn/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "gemm.hpp"
#include "hdgcn/core/error.hpp"

namespace hdgcn::ops {

std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TapeNode<T>>;

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t pad = out.size() - in.size();
  Shape padded(pad, 1);
  padded.insert(padded.end(), in.begin(), in.end());
  auto strides = contiguous_strides(padded);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (padded[i] == 1 && out[i] != 1) strides[i] = 0;
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shapes(a, b);
  plan.stride_a = broadcast_strides(a, plan.out);
  plan.stride_b = broadcast_strides(b, plan.out);
  return plan;
}

// Visits every output index with the matching offsets into both operands.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& fn) {
  const std::size_t total = numel(out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Splits the output into maximal runs along which both operand offsets
// advance by a fixed step, calling fn(out, a, b, length, step_a, step_b).
template <class F>
void for_each_run(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                  F&& fn) {
  const std::size_t rank = out.size();
  if (rank == 0) {
    fn(std::size_t{0}, std::size_t{0}, std::size_t{0}, std::size_t{1}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t step_a = sa[rank - 1];
  const std::size_t step_b = sb[rank - 1];
  std::size_t run = out[rank - 1];
  std::size_t outer_rank = rank - 1;
  while (outer_rank > 0 && sa[outer_rank - 1] == step_a * run && sb[outer_rank - 1] == step_b * run) {
    run *= out[outer_rank - 1];
    --outer_rank;
  }
  const Shape outer(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(outer_rank));
  const std::vector<std::size_t> oa(sa.begin(), sa.begin() + static_cast<std::ptrdiff_t>(outer_rank));
  const std::vector<std::size_t> ob(sb.begin(), sb.begin() + static_cast<std::ptrdiff_t>(outer_rank));
  for_each_broadcast(outer, oa, ob, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    fn(i * run, ia, ib, run, step_a, step_b);
  });
}

enum class BinaryKind { kAdd, kSub, kMul };

template <typename T>
T apply(BinaryKind kind, T a, T b) {
  switch (kind) {
    case BinaryKind::kAdd: return a + b;
    case BinaryKind::kSub: return a - b;
    case BinaryKind::kMul: return a * b;
  }
  return T(0);
}

template <typename T>
void binary_run(BinaryKind kind, const T* a, const T* b, T* out, std::size_t n, std::size_t step_a,
                std::size_t step_b) {
  if (step_a == 1 && step_b == 1) {
    switch (kind) {
      case BinaryKind::kAdd: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] + b[j]; break;
      case BinaryKind::kSub: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] - b[j]; break;
      case BinaryKind::kMul: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] * b[j]; break;
    }
  } else if (step_a == 1 && step_b == 0) {
    const T bv = *b;
    switch (kind) {
      case BinaryKind::kAdd: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] + bv; break;
      case BinaryKind::kSub: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] - bv; break;
      case BinaryKind::kMul: for (std::size_t j = 0; j < n; ++j) out[j] = a[j] * bv; break;
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) out[j] = apply(kind, a[j * step_a], b[j * step_b]);
  }
}

// Accumulates d(out)/d(operand) * g into the operand's gradient along one run.
// `other` is the value of the opposite operand (used by kMul only).
template <typename T>
void binary_grad_run(BinaryKind kind, bool is_b, const T* g, const T* other, std::size_t step_other, T* grad,
                     std::size_t step, std::size_t n) {
  const T sign = (kind == BinaryKind::kSub && is_b) ? T(-1) : T(1);
  if (kind == BinaryKind::kMul) {
    if (step == 1 && step_other == 1) {
      for (std::size_t j = 0; j < n; ++j) grad[j] += g[j] * other[j];
    } else if (step == 0) {
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += g[j] * other[j * step_other];
      *grad += acc;
    } else {
      for (std::size_t j = 0; j < n; ++j) grad[j * step] += g[j] * other[j * step_other];
    }
    return;
  }
  if (step == 1) {
    for (std::size_t j = 0; j < n; ++j) grad[j] += sign * g[j];
  } else if (step == 0) {
    T acc = T(0);
    for (std::size_t j = 0; j < n; ++j) acc += g[j];
    *grad += sign * acc;
  } else {
    for (std::size_t j = 0; j < n; ++j) grad[j * step] += sign * g[j];
  }
}

template <typename T>
DiffTensor<T> binary(const DiffTensor<T>& a, const DiffTensor<T>& b, BinaryKind kind) {
  BroadcastPlan plan;
  if (a.shape() == b.shape()) {
    plan.out = a.shape();
    plan.stride_a = plan.stride_b = contiguous_strides(plan.out);
  } else {
    plan = plan_broadcast(a.shape(), b.shape());
  }
  const auto& va = a.node()->value;
  const auto& vb = b.node()->value;
  std::vector<T> out(numel(plan.out));
  for_each_run(plan.out, plan.stride_a, plan.stride_b,
               [&](std::size_t i, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa, std::size_t sb) {
                 binary_run(kind, va.data() + ia, vb.data() + ib, out.data() + i, n, sa, sb);
               });
  Shape out_shape = plan.out;
  return make_result<T>(
      std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
      [kind, plan = std::move(plan)](TapeNode<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T* g = self.grad.data();
        for_each_run(plan.out, plan.stride_a, plan.stride_b,
                     [&](std::size_t i, std::size_t ia, std::size_t ib, std::size_t n, std::size_t sa,
                         std::size_t sb) {
                       if (na.requires_grad) {
                         binary_grad_run(kind, false, g + i, nb.value.data() + ib, sb, na.grad.data() + ia, sa, n);
                       }
                       if (nb.requires_grad) {
                         binary_grad_run(kind, true, g + i, na.value.data() + ia, sa, nb.grad.data() + ib, sb, n);
                       }
                     });
      });
}

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
DiffTensor<T> add(const DiffTensor<T>& a, const DiffTensor<T>& b) {
  return binary(a, b, BinaryKind::kAdd);
}

template <typename T>
DiffTensor<T> sub(const DiffTensor<T>& a, const DiffTensor<T>& b) {
  return binary(a, b, BinaryKind::kSub);
}

template <typename T>
DiffTensor<T> mul(const DiffTensor<T>& a, const DiffTensor<T>& b) {
  return binary(a, b, BinaryKind::kMul);
}

template <typename T>
DiffTensor<T> scale(const DiffTensor<T>& x, T factor) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [factor](TapeNode<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += factor * self.grad[i];
  });
}

template <typename T>
DiffTensor<T> reshape(const DiffTensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node_ptr()}, [](TapeNode<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

template <typename T>
DiffTensor<T> permute(const DiffTensor<T>& x, const std::vector<std::size_t>& order) {
  const Shape& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (order.size() != rank) throw DimensionError("permute: order length does not match rank");
  std::vector<bool> used(rank, false);
  for (auto o : order) {
    if (o >= rank || used[o]) throw DimensionError("permute: invalid axis order");
    used[o] = true;
  }
  const auto in_strides = contiguous_strides(in_shape);
  Shape out_shape(rank);
  std::vector<std::size_t> gather(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[order[i]];
    gather[i] = in_strides[order[i]];
  }
  // Offset of each output element in the input.
  std::vector<std::size_t> source(x.numel());
  std::vector<std::size_t> zero(rank, 0);
  for_each_broadcast(out_shape, gather, zero,
                     [&](std::size_t i, std::size_t ia, std::size_t) { source[i] = ia; });
  const auto& v = x.node()->value;
  std::vector<T> out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[source[i]];
  return make_result<T>(std::move(out_shape), std::move(out), {x.node_ptr()},
                        [source = std::move(source)](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[source[i]] += self.grad[i];
                        });
}

template <typename T>
DiffTensor<T> broadcast_to(const DiffTensor<T>& x, const Shape& shape) {
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw DimensionError("broadcast_to: " + to_string(x.shape()) + " does not expand to " +
                         to_string(shape));
  }
  auto stride = broadcast_strides(x.shape(), shape);
  auto dense = contiguous_strides(shape);
  const auto& v = x.node()->value;
  std::vector<T> out(numel(shape));
  for_each_run(shape, stride, dense,
               [&](std::size_t, std::size_t ia, std::size_t io, std::size_t n, std::size_t sa, std::size_t) {
                 if (sa == 0) std::fill_n(out.data() + io, n, v[ia]);
                 else for (std::size_t j = 0; j < n; ++j) out[io + j] = v[ia + j * sa];
               });
  return make_result<T>(shape, std::move(out), {x.node_ptr()},
                        [shape, stride = std::move(stride), dense = std::move(dense)](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          for_each_run(shape, stride, dense,
                                       [&](std::size_t, std::size_t ia, std::size_t io, std::size_t n,
                                           std::size_t sa, std::size_t) {
                                         binary_grad_run(BinaryKind::kAdd, false, self.grad.data() + io,
                                                         self.grad.data(), 0, in.grad.data() + ia, sa, n);
                                       });
                        });
}

template <typename T>
DiffTensor<T> concat(const std::vector<DiffTensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t tail = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) tail *= first[d];

  std::vector<std::size_t> widths;
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    widths.push_back(p.shape()[axis] * tail);
    inputs.push_back(p.node_ptr());
  }
  const std::size_t row = out_shape[axis] * tail;
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].node()->value;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    offset += widths[k];
  }
  return make_result<T>(std::move(out_shape), std::move(out), std::move(inputs),
                        [outer, row, widths = std::move(widths)](TapeNode<T>& self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < widths.size(); ++k) {
                            auto& in = *self.inputs[k];
                            if (in.requires_grad) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* src = self.grad.data() + o * row + offset;
                                T* dst = in.grad.data() + o * widths[k];
                                for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
                              }
                            }
                            offset += widths[k];
                          }
                        });
}

template <typename T>
DiffTensor<T> matmul(const DiffTensor<T>& a, const DiffTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(sa) + " x " + to_string(sb));
  }
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(batch_a, batch_b);
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch dimensions of " + to_string(sa) + " and " + to_string(sb) +
                         " do not broadcast");
  }
  const auto stride_a = broadcast_strides(batch_a, batch);
  const auto stride_b = broadcast_strides(batch_b, batch);
  // Per output batch element, the matrix index of each operand.
  std::vector<std::size_t> index_a(numel(batch));
  std::vector<std::size_t> index_b(numel(batch));
  for_each_broadcast(batch, stride_a, stride_b, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    index_a[i] = ia;
    index_b[i] = ib;
  });

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(numel(out_shape));
  const auto& va = a.node()->value;
  const auto& vb = b.node()->value;
  for (std::size_t i = 0; i < index_a.size(); ++i) {
    detail::gemm(false, false, m, n, k, va.data() + index_a[i] * m * k, vb.data() + index_b[i] * k * n,
                 out.data() + i * m * n, false);
  }
  return make_result<T>(
      std::move(out_shape), std::move(out), {a.node_ptr(), b.node_ptr()},
      [m, n, k, index_a = std::move(index_a), index_b = std::move(index_b)](TapeNode<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t i = 0; i < index_a.size(); ++i) {
          const T* g = self.grad.data() + i * m * n;
          if (na.requires_grad) {
            detail::gemm(false, true, m, k, n, g, nb.value.data() + index_b[i] * k * n,
                         na.grad.data() + index_a[i] * m * k, true);
          }
          if (nb.requires_grad) {
            detail::gemm(true, false, k, n, m, na.value.data() + index_a[i] * m * k, g,
                         nb.grad.data() + index_b[i] * k * n, true);
          }
        }
      });
}

template <typename T>
DiffTensor<T> graph_conv(const DiffTensor<T>& x, const DiffTensor<T>& adjacency) {
  require_rank(x.shape(), 4, "graph_conv");
  require_rank(adjacency.shape(), 3, "graph_conv");
  const std::size_t groups = adjacency.dim(0);
  const std::size_t joints = x.dim(3);
  if (adjacency.dim(1) != joints || adjacency.dim(2) != joints || groups == 0 || x.dim(1) % groups != 0) {
    throw DimensionError("graph_conv: adjacency " + to_string(adjacency.shape()) + " does not fit input " +
                         to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t rows = x.dim(1) / groups * x.dim(2);  // C*T rows per group
  const std::size_t block = rows * joints;
  const auto& vx = x.node()->value;
  const auto& va = adjacency.node()->value;
  std::vector<T> out(vx.size());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (n * groups + g) * block;
      detail::gemm(false, true, rows, joints, joints, vx.data() + off, va.data() + g * joints * joints,
                   out.data() + off, false);
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr(), adjacency.node_ptr()},
                        [batch, groups, rows, joints, block](TapeNode<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& na = *self.inputs[1];
                          for (std::size_t n = 0; n < batch; ++n) {
                            for (std::size_t g = 0; g < groups; ++g) {
                              const std::size_t off = (n * groups + g) * block;
                              const T* gout = self.grad.data() + off;
                              if (nx.requires_grad) {
                                detail::gemm(false, false, rows, joints, joints, gout,
                                             na.value.data() + g * joints * joints, nx.grad.data() + off, true);
                              }
                              if (na.requires_grad) {
                                detail::gemm(true, false, joints, joints, rows, gout, nx.value.data() + off,
                                             na.grad.data() + g * joints * joints, true);
                              }
                            }
                          }
                        });
}

template <typename T>
DiffTensor<T> weighted_sum(const DiffTensor<T>& x, const DiffTensor<T>& weights) {
  if (x.rank() < 3 || weights.rank() != 3 || weights.dim(0) != x.dim(0) || weights.dim(1) != x.dim(1) ||
      (weights.dim(2) != x.dim(2) && weights.dim(2) != 1)) {
    throw DimensionError("weighted_sum: weights " + to_string(weights.shape()) + " do not fit input " +
                         to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t layers = x.dim(1);
  const std::size_t channels = x.dim(2);
  const std::size_t inner = x.numel() / (batch * layers * channels);
  const std::size_t wc = weights.dim(2);
  Shape out_shape{batch};
  out_shape.insert(out_shape.end(), x.shape().begin() + 2, x.shape().end());
  const auto& vx = x.node()->value;
  const auto& vw = weights.node()->value;
  std::vector<T> out(batch * channels * inner, T(0));
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t c = 0; c < channels; ++c) {
        const T w = vw[(n * layers + l) * wc + (wc == 1 ? 0 : c)];
        const T* src = vx.data() + ((n * layers + l) * channels + c) * inner;
        T* dst = out.data() + (n * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
      }
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), {x.node_ptr(), weights.node_ptr()},
                        [batch, layers, channels, inner, wc](TapeNode<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          for (std::size_t n = 0; n < batch; ++n) {
                            for (std::size_t l = 0; l < layers; ++l) {
                              for (std::size_t c = 0; c < channels; ++c) {
                                const std::size_t wi = (n * layers + l) * wc + (wc == 1 ? 0 : c);
                                const std::size_t xi = ((n * layers + l) * channels + c) * inner;
                                const T* g = self.grad.data() + (n * channels + c) * inner;
                                if (nx.requires_grad) {
                                  const T w = nw.value[wi];
                                  T* dst = nx.grad.data() + xi;
                                  for (std::size_t i = 0; i < inner; ++i) dst[i] += w * g[i];
                                }
                                if (nw.requires_grad) {
                                  const T* src = nx.value.data() + xi;
                                  T acc = T(0);
                                  for (std::size_t i = 0; i < inner; ++i) acc += g[i] * src[i];
                                  nw.grad[wi] += acc;
                                }
                              }
                            }
                          }
                        });
}

template <typename T>
DiffTensor<T> reduce(const DiffTensor<T>& x, std::size_t axis, ReduceMode mode) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("reduce: axis out of range for " + to_string(s));
  const std::size_t len = s[axis];
  if (len == 0) throw DimensionError("reduce: empty axis in " + to_string(s));
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (d != axis) out_shape.push_back(s[d]);
  }
  const auto& v = x.node()->value;
  std::vector<T> out(outer * inner);
  std::vector<std::size_t> arg;
  if (mode == ReduceMode::kMax) {
    arg.assign(out.size(), 0);
    for (std::size_t o = 0; o < outer; ++o) {
      T* best = out.data() + o * inner;
      std::size_t* at = arg.data() + o * inner;
      const T* first = v.data() + o * len * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        best[i] = first[i];
        at[i] = o * len * inner + i;
      }
      for (std::size_t l = 1; l < len; ++l) {
        const std::size_t base = (o * len + l) * inner;
        const T* src = v.data() + base;
        for (std::size_t i = 0; i < inner; ++i) {
          if (src[i] > best[i]) {
            best[i] = src[i];
            at[i] = base + i;
          }
        }
      }
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = out.data() + o * inner;
      for (std::size_t l = 0; l < len; ++l) {
        const T* src = v.data() + (o * len + l) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
    if (mode == ReduceMode::kMean) {
      for (auto& val : out) val /= static_cast<T>(len);
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), {x.node_ptr()},
                        [mode, outer, inner, len, arg = std::move(arg)](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          const auto& g = self.grad;
                          if (mode == ReduceMode::kMax) {
                            for (std::size_t i = 0; i < g.size(); ++i) in.grad[arg[i]] += g[i];
                            return;
                          }
                          const T f = mode == ReduceMode::kMean ? T(1) / static_cast<T>(len) : T(1);
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* src = g.data() + o * inner;
                            for (std::size_t l = 0; l < len; ++l) {
                              T* dst = in.grad.data() + (o * len + l) * inner;
                              for (std::size_t i = 0; i < inner; ++i) dst[i] += f * src[i];
                            }
                          }
                        });
}

template <typename T>
DiffTensor<T> activation(const DiffTensor<T>& x, Activation kind) {
  const auto& v = x.node()->value;
  std::vector<T> out(v.size());
  if (kind == Activation::kRelu) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > T(0) ? v[i] : T(0);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) {
      out[i] = v[i] >= T(0) ? T(1) / (T(1) + std::exp(-v[i])) : std::exp(v[i]) / (T(1) + std::exp(v[i]));
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x.node_ptr()}, [kind](TapeNode<T>& self) {
    auto& in = *self.inputs[0];
    const auto& g = self.grad;
    if (kind == Activation::kRelu) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in.value[i] > T(0)) in.grad[i] += g[i];
      }
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = self.value[i];
        in.grad[i] += g[i] * y * (T(1) - y);
      }
    }
  });
}

template <typename T>
DiffTensor<T> pointwise_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() < 2 || sw.size() != 2) {
    throw DimensionError("pointwise_conv: expected x (N, C, ...) and weight (C_out, C_in), got " +
                         to_string(sx) + " and " + to_string(sw));
  }
  if (sw[1] != sx[1]) {
    throw DimensionError("pointwise_conv: weight " + to_string(sw) + " expects " + std::to_string(sw[1]) +
                         " input channels but input " + to_string(sx) + " has " + std::to_string(sx[1]));
  }
  const std::size_t batch = sx[0];
  const std::size_t cin = sx[1];
  const std::size_t cout = sw[0];
  const std::size_t spatial = x.numel() / (batch * cin);
  Shape out_shape = sx;
  out_shape[1] = cout;
  std::vector<T> out(batch * cout * spatial);
  const auto& vx = x.node()->value;
  const auto& vw = weight.node()->value;
  for (std::size_t n = 0; n < batch; ++n) {
    detail::gemm(false, false, cout, spatial, cin, vw.data(), vx.data() + n * cin * spatial,
                 out.data() + n * cout * spatial, false);
  }
  return make_result<T>(std::move(out_shape), std::move(out), {x.node_ptr(), weight.node_ptr()},
                        [batch, cin, cout, spatial](TapeNode<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          for (std::size_t n = 0; n < batch; ++n) {
                            const T* g = self.grad.data() + n * cout * spatial;
                            if (nw.requires_grad) {
                              detail::gemm(false, true, cout, cin, spatial, g, nx.value.data() + n * cin * spatial,
                                           nw.grad.data(), true);
                            }
                            if (nx.requires_grad) {
                              detail::gemm(true, false, cin, spatial, cout, nw.value.data(), g,
                                           nx.grad.data() + n * cin * spatial, true);
                            }
                          }
                        });
}

template <typename T>
DiffTensor<T> subsample_frames(const DiffTensor<T>& x, std::size_t stride) {
  require_rank(x.shape(), 4, "subsample_frames");
  if (stride == 0) throw ConfigError("subsample_frames: stride must be positive");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t frames = x.dim(2);
  const std::size_t joints = x.dim(3);
  const std::size_t out_frames = (frames + stride - 1) / stride;
  const auto& v = x.node()->value;
  std::vector<T> out(nc * out_frames * joints);
  for (std::size_t b = 0; b < nc; ++b) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((b * frames + t * stride) * joints), joints,
                  out.begin() + static_cast<std::ptrdiff_t>((b * out_frames + t) * joints));
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), out_frames, joints}, std::move(out), {x.node_ptr()},
                        [nc, frames, joints, out_frames, stride](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t b = 0; b < nc; ++b) {
                            for (std::size_t t = 0; t < out_frames; ++t) {
                              const T* src = self.grad.data() + (b * out_frames + t) * joints;
                              T* dst = in.grad.data() + (b * frames + t * stride) * joints;
                              for (std::size_t j = 0; j < joints; ++j) dst[j] += src[j];
                            }
                          }
                        });
}

namespace {

// Copies the frames read by one kernel tap into a (C_in, T_out * V) block.
template <typename T>
void gather_tap(const T* x, std::size_t cin, std::size_t frames, std::size_t joints, std::size_t out_frames,
                std::size_t stride, std::ptrdiff_t shift, T* cols) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
      T* dst = cols + (c * out_frames + t) * joints;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(frames)) {
        std::fill_n(dst, joints, T(0));
      } else {
        std::copy_n(x + (c * frames + static_cast<std::size_t>(src)) * joints, joints, dst);
      }
    }
  }
}

template <typename T>
void scatter_tap(const T* cols, std::size_t cin, std::size_t frames, std::size_t joints, std::size_t out_frames,
                 std::size_t stride, std::ptrdiff_t shift, T* x) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(frames)) continue;
      const T* from = cols + (c * out_frames + t) * joints;
      T* dst = x + (c * frames + static_cast<std::size_t>(src)) * joints;
      for (std::size_t j = 0; j < joints; ++j) dst[j] += from[j];
    }
  }
}

}  // namespace

template <typename T>
DiffTensor<T> temporal_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight, std::size_t dilation,
                            std::size_t stride) {
  require_rank(x.shape(), 4, "temporal_conv");
  const Shape& sw = weight.shape();
  if (sw.size() != 3) throw DimensionError("temporal_conv: weight must be (C_out, C_in, K), got " + to_string(sw));
  const std::size_t kernel = sw[2];
  if (kernel % 2 == 0) throw ConfigError("temporal_conv: kernel size must be odd, got " + std::to_string(kernel));
  if (dilation < 1) throw ConfigError("temporal_conv: dilation must be >= 1");
  if (stride != 1 && stride != 2) throw ConfigError("temporal_conv: stride must be 1 or 2");
  if (sw[1] != x.dim(1)) {
    throw DimensionError("temporal_conv: weight " + to_string(sw) + " does not match input " + to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t cin = x.dim(1);
  const std::size_t frames = x.dim(2);
  const std::size_t joints = x.dim(3);
  const std::size_t cout = sw[0];
  const std::size_t pad = dilation * (kernel - 1) / 2;
  const std::size_t extent = dilation * (kernel - 1) + 1;
  if (extent > frames + 2 * pad) {
    throw ConfigError("temporal_conv: kernel extent " + std::to_string(extent) + " exceeds padded length " +
                      std::to_string(frames + 2 * pad));
  }
  const std::size_t out_frames = (frames + 2 * pad - extent) / stride + 1;
  const std::size_t cols_size = cin * out_frames * joints;

  // Per-tap weight slices (K, C_out, C_in), contiguous for the GEMM.
  const auto& vw = weight.node()->value;
  std::vector<T> taps(kernel * cout * cin);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t k = 0; k < kernel; ++k) taps[(k * cout + o) * cin + c] = vw[(o * cin + c) * kernel + k];

  const auto& vx = x.node()->value;
  std::vector<T> out(batch * cout * out_frames * joints, T(0));
  std::vector<T> cols(cols_size);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const auto shift = static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(pad);
      gather_tap(vx.data() + n * cin * frames * joints, cin, frames, joints, out_frames, stride, shift, cols.data());
      detail::gemm(false, false, cout, out_frames * joints, cin, taps.data() + k * cout * cin, cols.data(),
                   out.data() + n * cout * out_frames * joints, true);
    }
  }
  return make_result<T>(
      {batch, cout, out_frames, joints}, std::move(out), {x.node_ptr(), weight.node_ptr()},
      [=, taps = std::move(taps)](TapeNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        std::vector<T> buffer(cols_size);
        std::vector<T> grad_taps(kernel * cout * cin, T(0));
        for (std::size_t n = 0; n < batch; ++n) {
          const T* g = self.grad.data() + n * cout * out_frames * joints;
          for (std::size_t k = 0; k < kernel; ++k) {
            const auto shift = static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(pad);
            if (nw.requires_grad) {
              gather_tap(nx.value.data() + n * cin * frames * joints, cin, frames, joints, out_frames, stride, shift,
                         buffer.data());
              detail::gemm(false, true, cout, cin, out_frames * joints, g, buffer.data(),
                           grad_taps.data() + k * cout * cin, true);
            }
            if (nx.requires_grad) {
              detail::gemm(true, false, cin, out_frames * joints, cout, taps.data() + k * cout * cin, g, buffer.data(),
                           false);
              scatter_tap(buffer.data(), cin, frames, joints, out_frames, stride, shift,
                          nx.grad.data() + n * cin * frames * joints);
            }
          }
        }
        if (nw.requires_grad) {
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t k = 0; k < kernel; ++k)
                nw.grad[(o * cin + c) * kernel + k] += grad_taps[(k * cout + o) * cin + c];
        }
      });
}

template <typename T>
DiffTensor<T> max_pool_frames(const DiffTensor<T>& x, std::size_t kernel, std::size_t stride) {
  require_rank(x.shape(), 4, "max_pool_frames");
  if (kernel % 2 == 0) throw ConfigError("max_pool_frames: kernel size must be odd");
  if (stride != 1 && stride != 2) throw ConfigError("max_pool_frames: stride must be 1 or 2");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t frames = x.dim(2);
  const std::size_t joints = x.dim(3);
  const std::size_t pad = (kernel - 1) / 2;
  const std::size_t out_frames = (frames + 2 * pad - kernel) / stride + 1;
  const auto& v = x.node()->value;
  std::vector<T> out(nc * out_frames * joints);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t b = 0; b < nc; ++b) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      for (std::size_t j = 0; j < joints; ++j) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_at = 0;
        bool found = false;
        for (std::size_t k = 0; k < kernel; ++k) {
          const auto src = static_cast<std::ptrdiff_t>(t * stride + k) - static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(frames)) continue;
          const std::size_t at = (b * frames + static_cast<std::size_t>(src)) * joints + j;
          if (!found || v[at] > best) {
            best = v[at];
            best_at = at;
            found = true;
          }
        }
        const std::size_t o = (b * out_frames + t) * joints + j;
        out[o] = best;
        arg[o] = best_at;
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), out_frames, joints}, std::move(out), {x.node_ptr()},
                        [arg = std::move(arg)](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[arg[i]] += self.grad[i];
                        });
}

template <typename T>
DiffTensor<T> batch_norm(const DiffTensor<T>& x, const DiffTensor<T>& gamma, const DiffTensor<T>& beta,
                         BatchNormStats<T>& stats, bool training) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("batch_norm: input needs a channel axis, got " + to_string(s));
  const std::size_t batch = s[0];
  const std::size_t channels = s[1];
  const std::size_t inner = x.numel() / (batch * channels);
  if (gamma.numel() != channels || beta.numel() != channels || stats.running_mean.size() != channels) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(channels) + " channels");
  }
  const std::size_t count = batch * inner;
  const auto& v = x.node()->value;
  const auto& g = gamma.node()->value;
  const auto& b = beta.node()->value;

  std::vector<T> mean(channels, T(0));
  std::vector<T> inv_std(channels, T(0));
  if (training) {
    for (std::size_t c = 0; c < channels; ++c) {
      T sum = T(0);
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = v.data() + (n * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) sum += p[i];
      }
      mean[c] = sum / static_cast<T>(count);
      T sq = T(0);
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = v.data() + (n * channels + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean[c]) * (p[i] - mean[c]);
      }
      const T var = sq / static_cast<T>(count);
      inv_std[c] = T(1) / std::sqrt(var + stats.eps);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : var;
      stats.running_mean[c] = (T(1) - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
      stats.running_var[c] = (T(1) - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + stats.eps);
    }
  }

  std::vector<T> normalized(v.size());
  std::vector<T> out(v.size());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (n * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        normalized[base + i] = (v[base + i] - mean[c]) * inv_std[c];
        out[base + i] = g[c] * normalized[base + i] + b[c];
      }
    }
  }
  return make_result<T>(
      s, std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [=, normalized = std::move(normalized), inv_std = std::move(inv_std)](TapeNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const auto& dy = self.grad;
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_dy = T(0);
          T sum_dy_xhat = T(0);
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_dy += dy[base + i];
              sum_dy_xhat += dy[base + i] * normalized[base + i];
            }
          }
          if (ng.requires_grad) ng.grad[c] += sum_dy_xhat;
          if (nb.requires_grad) nb.grad[c] += sum_dy;
          if (!nx.requires_grad) continue;
          const T gc = ng.value[c];
          if (training) {
            const T m = static_cast<T>(count);
            const T k = gc * inv_std[c] / m;
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t base = (n * channels + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                nx.grad[base + i] += k * (m * dy[base + i] - sum_dy - normalized[base + i] * sum_dy_xhat);
              }
            }
          } else {
            const T k = gc * inv_std[c];
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t base = (n * channels + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) nx.grad[base + i] += k * dy[base + i];
            }
          }
        }
      });
}

template <typename T>
std::vector<T> softmax_rows(std::span<const T> logits, std::size_t rows, std::size_t cols) {
  if (logits.size() != rows * cols) throw DimensionError("softmax_rows: size mismatch");
  std::vector<T> out(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * cols;
    T* p = out.data() + r * cols;
    const T peak = *std::max_element(in, in + cols);
    T total = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      p[c] = std::exp(in[c] - peak);
      total += p[c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[c] /= total;
  }
  return out;
}

template <typename T>
DiffTensor<T> softmax_cross_entropy(const DiffTensor<T>& logits, std::span<const int> labels, T label_smoothing) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
  const auto& v = logits.node()->value;
  std::vector<T> probs(v.size());
  T loss = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = v.data() + r * classes;
    const T peak = *std::max_element(in, in + classes);
    T total = T(0);
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(in[c] - peak);
    const T log_z = peak + std::log(total);
    T mean_nll = T(0);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(in[c] - log_z);
      mean_nll += log_z - in[c];
    }
    mean_nll /= static_cast<T>(classes);
    const T nll = log_z - in[static_cast<std::size_t>(labels[r])];
    loss += (T(1) - label_smoothing) * nll + label_smoothing * mean_nll;
  }
  loss /= static_cast<T>(rows);
  std::vector<int> targets(labels.begin(), labels.end());
  return make_result<T>({}, std::vector<T>{loss}, {logits.node_ptr()},
                        [=, probs = std::move(probs), targets = std::move(targets)](TapeNode<T>& self) {
                          auto& in = *self.inputs[0];
                          const T g = self.grad[0] / static_cast<T>(rows);
                          const T spread = label_smoothing / static_cast<T>(classes);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < classes; ++c) {
                              T target = spread;
                              if (static_cast<int>(c) == targets[r]) target += T(1) - label_smoothing;
                              in.grad[r * classes + c] += g * (probs[r * classes + c] - target);
                            }
                          }
                        });
}

template <typename T>
NeighborLists knn(const DiffTensor<T>& x, std::size_t k) {
  require_rank(x.shape(), 3, "knn");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t points = x.dim(2);
  if (k >= points) {
    throw ConfigError("knn: k = " + std::to_string(k) + " must be smaller than the point count " +
                      std::to_string(points));
  }
  NeighborLists lists;
  lists.batch = batch;
  lists.points = points;
  lists.per_point = k + 1;
  lists.index.resize(batch * points * (k + 1));
  const auto& v = x.node()->value;
  std::vector<std::pair<T, std::int32_t>> candidates;
  for (std::size_t n = 0; n < batch; ++n) {
    const T* base = v.data() + n * channels * points;
    for (std::size_t i = 0; i < points; ++i) {
      candidates.clear();
      for (std::size_t j = 0; j < points; ++j) {
        if (j == i) continue;
        T d = T(0);
        for (std::size_t c = 0; c < channels; ++c) {
          const T diff = base[c * points + i] - base[c * points + j];
          d += diff * diff;
        }
        candidates.emplace_back(d, static_cast<std::int32_t>(j));
      }
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end());
      std::int32_t* out = lists.index.data() + (n * points + i) * (k + 1);
      out[0] = static_cast<std::int32_t>(i);
      for (std::size_t q = 0; q < k; ++q) out[q + 1] = candidates[q].second;
    }
  }
  return lists;
}

template <typename T>
DiffTensor<T> edge_conv(const DiffTensor<T>& x, const DiffTensor<T>& weight, const NeighborLists& neighbors) {
  require_rank(x.shape(), 3, "edge_conv");
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t points = x.dim(2);
  const Shape& sw = weight.shape();
  if (sw.size() != 2 || sw[1] != 2 * channels) {
    throw DimensionError("edge_conv: weight " + to_string(sw) + " must be (C_out, " + std::to_string(2 * channels) +
                         ") for input " + to_string(x.shape()));
  }
  if (neighbors.batch != batch || neighbors.points != points || neighbors.per_point == 0) {
    throw DimensionError("edge_conv: neighbor lists do not match input " + to_string(x.shape()));
  }
  const std::size_t cout = sw[0];
  // W [x_i ; x_j - x_i] = (W_self - W_diff) x_i + W_diff x_j.
  const auto& vw = weight.node()->value;
  std::vector<T> w_center(cout * channels);
  std::vector<T> w_diff(cout * channels);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      w_diff[o * channels + c] = vw[o * 2 * channels + channels + c];
      w_center[o * channels + c] = vw[o * 2 * channels + c] - w_diff[o * channels + c];
    }
  }
  const auto& vx = x.node()->value;
  std::vector<T> center(cout * points);
  std::vector<T> side(cout * points);
  std::vector<T> out(batch * cout * points);
  std::vector<std::int32_t> arg(out.size());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = vx.data() + n * channels * points;
    detail::gemm(false, false, cout, points, channels, w_center.data(), xn, center.data(), false);
    detail::gemm(false, false, cout, points, channels, w_diff.data(), xn, side.data(), false);
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t i = 0; i < points; ++i) {
        auto list = neighbors.of(n, i);
        std::int32_t best = list[0];
        for (auto j : list) {
          const T a = side[o * points + static_cast<std::size_t>(j)];
          const T b = side[o * points + static_cast<std::size_t>(best)];
          if (a > b || (a == b && j < best)) best = j;
        }
        const std::size_t at = (n * cout + o) * points + i;
        out[at] = center[o * points + i] + side[o * points + static_cast<std::size_t>(best)];
        arg[at] = best;
      }
    }
  }
  return make_result<T>(
      {batch, cout, points}, std::move(out), {x.node_ptr(), weight.node_ptr()},
      [=, w_center = std::move(w_center), w_diff = std::move(w_diff), arg = std::move(arg)](TapeNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        std::vector<T> g_side(cout * points);
        std::vector<T> g_wc(cout * channels, T(0));
        std::vector<T> g_wd(cout * channels, T(0));
        for (std::size_t n = 0; n < batch; ++n) {
          const T* g_center = self.grad.data() + n * cout * points;
          std::fill(g_side.begin(), g_side.end(), T(0));
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t i = 0; i < points; ++i) {
              const std::size_t at = (n * cout + o) * points + i;
              g_side[o * points + static_cast<std::size_t>(arg[at])] += self.grad[at];
            }
          }
          const T* xn = nx.value.data() + n * channels * points;
          if (nw.requires_grad) {
            detail::gemm(false, true, cout, channels, points, g_center, xn, g_wc.data(), true);
            detail::gemm(false, true, cout, channels, points, g_side.data(), xn, g_wd.data(), true);
          }
          if (nx.requires_grad) {
            T* gx = nx.grad.data() + n * channels * points;
            detail::gemm(true, false, channels, points, cout, w_center.data(), g_center, gx, true);
            detail::gemm(true, false, channels, points, cout, w_diff.data(), g_side.data(), gx, true);
          }
        }
        if (nw.requires_grad) {
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t c = 0; c < channels; ++c) {
              nw.grad[o * 2 * channels + c] += g_wc[o * channels + c];
              nw.grad[o * 2 * channels + channels + c] += g_wd[o * channels + c] - g_wc[o * channels + c];
            }
          }
        }
      });
}

template <typename T>
DiffTensor<T> dropout(const DiffTensor<T>& x, double p, std::mt19937_64& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T factor = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : T(0);
  return mul(x, DiffTensor<T>::constant(x.shape(), std::move(mask)));
}

#define HDGCN_INSTANTIATE_OPS(T)                                                                              \
  template DiffTensor<T> add(const DiffTensor<T>&, const DiffTensor<T>&);                                     \
  template DiffTensor<T> sub(const DiffTensor<T>&, const DiffTensor<T>&);                                     \
  template DiffTensor<T> mul(const DiffTensor<T>&, const DiffTensor<T>&);                                     \
  template DiffTensor<T> scale(const DiffTensor<T>&, T);                                                      \
  template DiffTensor<T> reshape(const DiffTensor<T>&, Shape);                                                \
  template DiffTensor<T> permute(const DiffTensor<T>&, const std::vector<std::size_t>&);                      \
  template DiffTensor<T> broadcast_to(const DiffTensor<T>&, const Shape&);                                    \
  template DiffTensor<T> concat(const std::vector<DiffTensor<T>>&, std::size_t);                              \
  template DiffTensor<T> matmul(const DiffTensor<T>&, const DiffTensor<T>&);                                  \
  template DiffTensor<T> graph_conv(const DiffTensor<T>&, const DiffTensor<T>&);                              \
  template DiffTensor<T> weighted_sum(const DiffTensor<T>&, const DiffTensor<T>&);                            \
  template DiffTensor<T> reduce(const DiffTensor<T>&, std::size_t, ReduceMode);                               \
  template DiffTensor<T> activation(const DiffTensor<T>&, Activation);                                        \
  template DiffTensor<T> pointwise_conv(const DiffTensor<T>&, const DiffTensor<T>&);                          \
  template DiffTensor<T> subsample_frames(const DiffTensor<T>&, std::size_t);                                 \
  template DiffTensor<T> temporal_conv(const DiffTensor<T>&, const DiffTensor<T>&, std::size_t, std::size_t); \
  template DiffTensor<T> max_pool_frames(const DiffTensor<T>&, std::size_t, std::size_t);                     \
  template DiffTensor<T> batch_norm(const DiffTensor<T>&, const DiffTensor<T>&, const DiffTensor<T>&,         \
                                    BatchNormStats<T>&, bool);                                                \
  template DiffTensor<T> softmax_cross_entropy(const DiffTensor<T>&, std::span<const int>, T);                \
  template std::vector<T> softmax_rows(std::span<const T>, std::size_t, std::size_t);                         \
  template NeighborLists knn(const DiffTensor<T>&, std::size_t);                                              \
  template DiffTensor<T> edge_conv(const DiffTensor<T>&, const DiffTensor<T>&, const NeighborLists&);         \
  template DiffTensor<T> dropout(const DiffTensor<T>&, double, std::mt19937_64&, bool);

HDGCN_INSTANTIATE_OPS(float)
HDGCN_INSTANTIATE_OPS(double)

#undef HDGCN_INSTANTIATE_OPS

}  // namespace hdgcn::ops
