// SPDX-License-Identifier: Apache-2.0
#include "sald/nn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sald/error.hpp"

namespace sald::nn {

namespace {
std::atomic<Precision> g_precision{Precision::f32};
std::atomic<bool> g_finite_checks{false};
std::atomic<std::uint64_t> g_node_ids{0};
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Precision precision() { return g_precision.load(); }
void set_precision(Precision p) { g_precision.store(p); }
bool finite_checks() { return g_finite_checks.load(); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::uint64_t next_node_id() { return ++g_node_ids; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value.assign(nn::numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
  node_->id = next_node_id();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<Node<T>>()) {
  if (nn::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->id = next_node_id();
}

template <typename T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                             std::function<void(Node<T>&)> backward, const char* op) {
  if (finite_checks()) {
    for (const T& v : values) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
  Tensor out(std::move(shape), std::move(values));
  out.node_->op = op;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->leaf = false;
    out.node_->backward = std::move(backward);
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
  }
  return out;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  static const Shape empty;
  return node_ ? node_->shape : empty;
}

template <typename T>
int Tensor<T>::dim(int i) const {
  const auto& s = shape();
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size())) {
    throw IndexError("dimension index " + std::to_string(i) + " out of range for " + to_string(s));
  }
  return s[static_cast<std::size_t>(i)];
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) return {};
  return {node_->value.data(), node_->value.size()};
}

template <typename T>
std::span<T> Tensor<T>::data() {
  if (!node_) throw GraphError("access to an undefined tensor");
  return {node_->value.data(), node_->value.size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!node_) throw GraphError("set_requires_grad on an undefined tensor");
  if (!node_->leaf) throw GraphError("requires_grad can only be changed on leaves");
  node_->requires_grad = on;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!node_) return {};
  return {node_->grad.data(), node_->grad.size()};
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() {
  if (!node_) throw GraphError("grad access on an undefined tensor");
  auto& g = node_->grad_buffer();
  return {g.data(), g.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  if (!node_) return {};
  Tensor out;
  out.node_ = std::make_shared<Node<T>>();
  out.node_->shape = node_->shape;
  out.node_->value = node_->value;
  out.node_->id = next_node_id();
  out.node_->op = "detach";
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  if (root == nullptr || !root->requires_grad) return order;
  std::unordered_set<const Node<T>*> seen;
  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
std::size_t Tensor<T>::backward() const {
  if (!node_ || !node_->requires_grad) {
    throw GraphError("backward through a tensor that is not attached to a graph");
  }
  if (node_->value.size() != 1) {
    throw GraphError("backward requires a scalar, got shape " + to_string(node_->shape));
  }
  auto order = topological_order(node_.get());
  for (Node<T>* n : order) {
    if (!n->leaf) n->grad.assign(n->value.size(), T(0));
  }
  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    ++n->visits;
    if (n->backward) n->backward(*n);
  }
  return order.size();
}

template class Tensor<float>;
template class Tensor<double>;
template std::vector<Node<float>*> topological_order(Node<float>*);
template std::vector<Node<double>*> topological_order(Node<double>*);

}  // namespace sald::nn
