#pragma once

#include <initializer_list>

#include "saufno/tensor/tensor.hpp"

namespace saufno {

bool grad_enabled();

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Debug mode: every op scans its output for NaN/Inf and throws NonFiniteError.
void set_check_finite(bool on);
bool check_finite_enabled();

template <class R>
void check_finite(const BasicTensor<R>& t, const char* op);

template <class R>
bool any_requires_grad(std::initializer_list<const BasicTensor<R>*> inputs) {
  if (!grad_enabled()) return false;
  for (const auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

// Attaches a tape node to `out` when any input requires grad. The backward
// closure gets d(loss)/d(out) and must accumulate into the inputs it needs.
template <class R>
void record(BasicTensor<R>& out, const char* op, std::initializer_list<const BasicTensor<R>*> inputs,
            std::function<void(std::span<const R>)> backward) {
  if (check_finite_enabled()) check_finite(out, op);
  if (!any_requires_grad<R>(inputs)) return;
  auto node = std::make_shared<TapeNode<R>>();
  node->op = op;
  for (const auto* t : inputs)
    if (t && t->defined()) node->inputs.push_back(t->storage());
  node->backward = std::move(backward);
  out.storage()->node = std::move(node);
  out.storage()->requires_grad = true;
}

// Accumulation target for an input's gradient, or an empty span when the
// input does not participate in differentiation.
template <class R>
std::span<R> grad_sink(const BasicTensor<R>& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  return t.storage()->grad_buffer();
}

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls; intermediate gradients are released after use.
template <class R>
void backward(const BasicTensor<R>& loss);

}  // namespace saufno
