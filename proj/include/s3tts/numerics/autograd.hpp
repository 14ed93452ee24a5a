#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "s3tts/numerics/tensor.hpp"

namespace s3tts {

namespace detail {

inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool& finite_check_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// One primitive application in the computation record. `inputs` and
// `backward` are only populated when the result requires a gradient.
template <class T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::span<T> grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

template <class T>
class Var {
 public:
  using value_type = T;

  Var() : node_(std::make_shared<Node<T>>()) {}
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->seq = detail::next_sequence();
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var scalar(T v, bool requires_grad = false) { return Var(Tensor<T>::scalar(v), requires_grad); }

  const Tensor<T>& value() const { return node_->value; }
  // Direct write access for optimizers and codebook maintenance. Never call
  // while a graph that saved this value is still alive.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }
  const char* op() const { return node_->op; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Fail-fast switch for the finite check applied to every primitive output.
class FiniteCheckGuard {
 public:
  explicit FiniteCheckGuard(bool enabled) : prev_(detail::finite_check_flag()) {
    detail::finite_check_flag() = enabled;
  }
  ~FiniteCheckGuard() { detail::finite_check_flag() = prev_; }
  FiniteCheckGuard(const FiniteCheckGuard&) = delete;
  FiniteCheckGuard& operator=(const FiniteCheckGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
  if (!detail::finite_check_flag()) return;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]))
      throw NumericError(std::string("non-finite value produced by '") + op + "' at flat index " +
                         std::to_string(i) + " of shape " + shape_str(t.shape()));
  }
}

// Records a primitive application. `backward` receives the result node and
// must accumulate into the grad buffers of inputs that require a gradient.
template <class T, class Backward>
Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward&& backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  node->seq = detail::next_sequence();
  if (grad_enabled()) {
    bool need = std::any_of(inputs.begin(), inputs.end(), [](const Var<T>& v) { return v.requires_grad(); });
    if (need) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
      node->backward = std::forward<Backward>(backward);
    }
  }
  return Var<T>(std::move(node));
}

// Variadic-input flavour used by concat.
template <class T, class Backward>
Var<T> record_many(const char* op, Tensor<T> value, const std::vector<Var<T>>& inputs, Backward&& backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  node->seq = detail::next_sequence();
  if (grad_enabled()) {
    bool need = std::any_of(inputs.begin(), inputs.end(), [](const Var<T>& v) { return v.requires_grad(); });
    if (need) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
      node->backward = std::forward<Backward>(backward);
    }
  }
  return Var<T>(std::move(node));
}

// Reverse pass. Nodes are replayed in strictly decreasing creation order,
// i.e. the exact reverse of the forward order. `visited_ops`, when given,
// receives the sequence numbers in the order they were replayed.
template <class T>
void backward(const Var<T>& root, std::span<const T> seed = {}, std::vector<std::uint64_t>* visited_ops = nullptr) {
  Node<T>* top = root.node();
  if (!top->requires_grad) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{top};
  seen.insert(top);
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Node<T>* a, const Node<T>* b) { return a->seq > b->seq; });

  auto g = top->grad_buffer();
  if (seed.empty()) {
    if (g.size() != 1) throw ShapeError("backward() without seed requires a scalar root");
    g[0] += T(1);
  } else {
    if (seed.size() != g.size()) throw ShapeError("backward() seed does not match root size");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  }
  for (Node<T>* n : order) {
    if (n->is_leaf() || n->grad.empty()) continue;
    if (visited_ops) visited_ops->push_back(n->seq);
    n->backward(*n);
  }
}

// Constant (no-grad) copy of a value.
template <class T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value(), false);
}

template <class T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

}  // namespace s3tts
