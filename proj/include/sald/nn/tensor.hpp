// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors that record the operations producing them, so a
// scalar result can be differentiated by reverse-mode accumulation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sald::nn {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Global numeric mode. f64 is used by gradient checks and oracle tests,
/// f32 by training and sampling. Entry points dispatch on it.
enum class Precision { f32, f64 };
Precision precision();
void set_precision(Precision p);

/// When enabled every op verifies its output is finite and throws
/// NumericError otherwise.
bool finite_checks();
void set_finite_checks(bool enabled);

/// Graph recording is per thread; disabled recording builds no graph.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  /// Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
  std::uint64_t id = 0;
  int visits = 0;
  const char* op = "leaf";

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_id();

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  /// Builds an op result. Records inputs and the backward closure only when
  /// grad recording is on and some input requires grad.
  static Tensor from_op(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                        std::function<void(Node<T>&)> backward, const char* op);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int dim(int i) const;
  int ndim() const { return static_cast<int>(shape().size()); }
  std::size_t numel() const { return node_ ? node_->value.size() : 0; }

  std::span<const T> values() const;
  /// Mutable access to the stored values. Intended for leaves (parameters,
  /// inputs, buffers); mutating an op result invalidates its backward.
  std::span<T> data();
  T item() const;
  T at(std::size_t i) const { return values()[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return !node_ || node_->leaf; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const;
  std::span<T> grad_mut();
  void zero_grad();

  /// Same values, no graph history, no grad.
  Tensor detach() const;
  /// Deep copy of the values into a fresh leaf with the same requires_grad.
  Tensor clone() const;

  /// Reverse-mode accumulation from this scalar. Leaf grads accumulate across
  /// calls; intermediate grads are recomputed. Returns the number of graph
  /// nodes visited (each exactly once).
  std::size_t backward() const;

  std::uint64_t id() const { return node_ ? node_->id : 0; }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Nodes reachable from `root` through requires-grad edges, inputs first.
template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root);

/// Value copy into another scalar type; the result is a fresh leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  auto v = t.values();
  return Tensor<To>(t.shape(), std::vector<To>(v.begin(), v.end()), t.requires_grad());
}

}  // namespace sald::nn
