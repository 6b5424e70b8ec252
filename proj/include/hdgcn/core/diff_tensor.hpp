#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hdgcn/core/shape.hpp"

namespace hdgcn {

template <typename T>
struct TapeNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  // Leaves keep their gradient between backward passes; interior nodes are reset.
  bool is_leaf = true;
  std::string name;
  std::vector<std::shared_ptr<TapeNode>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(TapeNode&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Dense row-major array that records the operations producing it so that
/// gradients can be propagated back to its leaves.
template <typename T>
class DiffTensor {
 public:
  using value_type = T;

  DiffTensor() = default;
  explicit DiffTensor(std::shared_ptr<TapeNode<T>> node) : node_(std::move(node)) {}

  /// Tensor without a tape entry. Gradients never flow into it.
  static DiffTensor constant(Shape shape, std::vector<T> values);
  static DiffTensor constant(Shape shape, T fill = T(0));
  /// Leaf that collects gradients when `requires_grad` is set.
  static DiffTensor leaf(Shape shape, std::vector<T> values, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> values() const { return node_->value; }
  /// Mutable view of the underlying storage. Only meaningful on leaves.
  std::span<T> mutable_values() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  T item() const;

  /// Reverse-mode sweep from a scalar output with seed 1.
  void backward() const;
  /// Reverse-mode sweep with an explicit output seed of the same size.
  void backward(std::span<const T> seed) const;

  TapeNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TapeNode<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TapeNode<T>> node_;
};

/// Creates an op result. The backward closure is stored only when at least
/// one input requires a gradient.
template <typename T>
DiffTensor<T> make_result(Shape shape, std::vector<T> value,
                          std::vector<std::shared_ptr<TapeNode<T>>> inputs,
                          std::function<void(TapeNode<T>&)> backward);

/// Trainable tensor with a persistent gradient buffer. Copies share storage,
/// so a Parameter can be handed to both a layer and an optimizer.
template <typename T>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Shape shape, std::vector<T> init, bool trainable = true);

  const std::string& name() const { return node_->name; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  bool trainable() const { return node_->requires_grad; }
  void set_trainable(bool on);

  DiffTensor<T> tensor() const { return DiffTensor<T>(node_); }
  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad();

  bool defined() const { return node_ != nullptr; }

 private:
  std::shared_ptr<TapeNode<T>> node_;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

}  // namespace hdgcn
