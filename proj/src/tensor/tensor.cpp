#include "saufno/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "saufno/tensor/autograd.hpp"

namespace saufno {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <class R>
BasicTensor<R> BasicTensor<R>::zeros(Shape shape) {
  return full(std::move(shape), R(0));
}

template <class R>
BasicTensor<R> BasicTensor<R>::full(Shape shape, R value) {
  auto s = std::make_shared<TensorStorage<R>>();
  const auto n = shape_numel(shape);
  s->shape = std::move(shape);
  s->data.assign(static_cast<std::size_t>(n), value);
  return BasicTensor(std::move(s));
}

template <class R>
BasicTensor<R> BasicTensor<R>::from_data(Shape shape, std::vector<R> data) {
  return copy_of(std::move(shape), data);
}

template <class R>
BasicTensor<R> BasicTensor<R>::copy_of(Shape shape, std::span<const R> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  auto s = std::make_shared<TensorStorage<R>>();
  s->shape = std::move(shape);
  s->data.assign(data.begin(), data.end());
  return BasicTensor(std::move(s));
}

template <class R>
std::int64_t BasicTensor<R>::dim(int axis) const {
  const int n = static_cast<int>(s_->shape.size());
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n) throw ShapeError("axis out of range for shape " + shape_str(s_->shape));
  return s_->shape[static_cast<std::size_t>(axis)];
}

template <class R>
R BasicTensor<R>::item() const {
  if (s_->data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(s_->shape));
  return s_->data[0];
}

template <class R>
BasicTensor<R> BasicTensor<R>::clone() const {
  return copy_of(s_->shape, s_->data);
}

template <class R>
BasicTensor<R> BasicTensor<R>::detach() const {
  return clone();
}

template class BasicTensor<float>;
template class BasicTensor<double>;

// ---------------------------------------------------------------------------
// autograd

namespace {
thread_local bool t_grad_enabled = true;
bool g_check_finite = false;
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_check_finite(bool on) { g_check_finite = on; }
bool check_finite_enabled() { return g_check_finite; }

template <class R>
void check_finite(const BasicTensor<R>& t, const char* op) {
  for (R v : t.data())
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
}

template void check_finite(const BasicTensor<float>&, const char*);
template void check_finite(const BasicTensor<double>&, const char*);

template <class R>
void backward(const BasicTensor<R>& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  using Storage = TensorStorage<R>;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Storage*> order;
  std::unordered_set<Storage*> visited;
  std::vector<std::pair<Storage*, std::size_t>> stack;
  Storage* root = loss.storage().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [s, next] = stack.back();
    if (s->node && next < s->node->inputs.size()) {
      Storage* child = s->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(s);
    stack.pop_back();
  }

  root->grad_buffer()[0] += R(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Storage* s = *it;
    if (!s->node) continue;
    if (!s->grad.empty()) s->node->backward(std::span<const R>(s->grad));
    s->grad.clear();
    s->grad.shrink_to_fit();
  }
}

template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, -1);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace saufno
