#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "saufno/tensor/aligned.hpp"

namespace saufno {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class R>
struct TensorStorage;

// One recorded operation. Holds its inputs alive; the output owns the node, so
// the graph is released together with the last reference to the loss.
template <class R>
struct TapeNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorStorage<R>>> inputs;
  // Receives d(loss)/d(output) and accumulates into the inputs' grad buffers.
  std::function<void(std::span<const R>)> backward;
};

template <class R>
struct TensorStorage {
  Shape shape;
  AlignedVector<R> data;
  AlignedVector<R> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<TapeNode<R>> node;

  std::span<R> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), R(0));
    return grad;
  }
};

// Dense row-major tensor handle. Copies share storage (like an autograd
// variable); use clone() for an independent copy.
template <class R>
class BasicTensor {
 public:
  using value_type = R;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<TensorStorage<R>> storage) : s_(std::move(storage)) {}

  static BasicTensor zeros(Shape shape);
  static BasicTensor full(Shape shape, R value);
  static BasicTensor from_data(Shape shape, std::vector<R> data);
  static BasicTensor copy_of(Shape shape, std::span<const R> data);
  static BasicTensor scalar(R value) { return from_data({1}, {value}); }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t ndim() const { return s_->shape.size(); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(s_->data.size()); }

  std::span<R> data() { return s_->data; }
  std::span<const R> data() const { return s_->data; }
  R* ptr() { return s_->data.data(); }
  const R* ptr() const { return s_->data.data(); }
  R item() const;

  bool requires_grad() const { return s_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true) {
    s_->requires_grad = on;
    return *this;
  }
  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const R> grad() const { return s_->grad; }
  void zero_grad() { s_->grad.clear(); }
  bool is_leaf() const { return !s_->node; }

  BasicTensor clone() const;   // deep copy of data, detached
  BasicTensor detach() const;  // shares nothing with the tape

  const std::shared_ptr<TensorStorage<R>>& storage() const { return s_; }

 private:
  std::shared_ptr<TensorStorage<R>> s_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Complex tensor; std::complex<R> is layout-compatible with interleaved (re, im).
template <class R>
struct BasicComplexTensor {
  Shape shape;
  std::vector<std::complex<R>> data;

  BasicComplexTensor() = default;
  explicit BasicComplexTensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape))) {}

  std::span<const R> interleaved() const {
    return {reinterpret_cast<const R*>(data.data()), data.size() * 2};
  }
};

using ComplexTensor = BasicComplexTensor<float>;

template <class R>
struct NamedParameter {
  std::string name;
  BasicTensor<R> tensor;
};

template <class R>
using ParameterList = std::vector<NamedParameter<R>>;

// Keeps freed tensor buffers in the heap instead of returning them to the OS.
// Large activations otherwise get a fresh mmap (and page faults) every step.
// No-op outside glibc. Call once, early in main.
void tune_allocator();

}  // namespace saufno
