#include "hdgcn/core/diff_tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "hdgcn/core/error.hpp"

namespace hdgcn {

template <typename T>
DiffTensor<T> DiffTensor<T>::constant(Shape shape, std::vector<T> values) {
  if (hdgcn::numel(shape) != values.size()) {
    throw DimensionError("constant: shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<TapeNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return DiffTensor(std::move(node));
}

template <typename T>
DiffTensor<T> DiffTensor<T>::constant(Shape shape, T fill) {
  std::vector<T> values(hdgcn::numel(shape), fill);
  return constant(std::move(shape), std::move(values));
}

template <typename T>
DiffTensor<T> DiffTensor<T>::leaf(Shape shape, std::vector<T> values, bool requires_grad) {
  auto t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = requires_grad;
  if (requires_grad) t.node_->ensure_grad();
  return t;
}

template <typename T>
T DiffTensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
void DiffTensor<T>::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() without seed needs a scalar, got " + to_string(shape()));
  }
  const T one = T(1);
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void DiffTensor<T>::backward(std::span<const T> seed) const {
  if (seed.size() != numel()) throw DimensionError("backward seed size mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversing it gives a topological order in which
  // every node is visited once, after all of its consumers.
  std::vector<TapeNode<T>*> order;
  std::unordered_set<TapeNode<T>*> seen;
  std::vector<std::pair<TapeNode<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TapeNode<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TapeNode<T>* n : order) {
    if (n->is_leaf) {
      n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), T(0));
    }
  }
  TapeNode<T>* root = node_.get();
  for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TapeNode<T>* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

template <typename T>
DiffTensor<T> make_result(Shape shape, std::vector<T> value,
                          std::vector<std::shared_ptr<TapeNode<T>>> inputs,
                          std::function<void(TapeNode<T>&)> backward) {
  auto node = std::make_shared<TapeNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& in) { return in && in->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return DiffTensor<T>(std::move(node));
}

template <typename T>
Parameter<T>::Parameter(std::string name, Shape shape, std::vector<T> init, bool trainable) {
  if (hdgcn::numel(shape) != init.size()) {
    throw DimensionError("parameter '" + name + "': shape " + to_string(shape) +
                         " does not match " + std::to_string(init.size()) + " values");
  }
  node_ = std::make_shared<TapeNode<T>>();
  node_->name = std::move(name);
  node_->shape = std::move(shape);
  node_->value = std::move(init);
  node_->requires_grad = trainable;
  node_->ensure_grad();
}

template <typename T>
void Parameter<T>::set_trainable(bool on) {
  node_->requires_grad = on;
}

template <typename T>
void Parameter<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template class DiffTensor<float>;
template class DiffTensor<double>;
template class Parameter<float>;
template class Parameter<double>;
template DiffTensor<float> make_result(Shape, std::vector<float>,
                                       std::vector<std::shared_ptr<TapeNode<float>>>,
                                       std::function<void(TapeNode<float>&)>);
template DiffTensor<double> make_result(Shape, std::vector<double>,
                                        std::vector<std::shared_ptr<TapeNode<double>>>,
                                        std::function<void(TapeNode<double>&)>);

}  // namespace hdgcn
