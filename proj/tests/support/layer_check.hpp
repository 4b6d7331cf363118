#pragma once

// Gradient checks for composite layers: the layer is built twice from one
// seed, once in 64-bit and once in 32-bit. Both analytic gradients are
// compared against 64-bit central differences.

#include <algorithm>
#include <cmath>
#include <functional>

#include "saufno/nn/layers.hpp"
#include "saufno/tensor/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/random.hpp"

namespace saufno::testing {

template <class L>
struct scalar_of;
template <class R>
struct scalar_of<ParameterList<R>> {
  using type = R;
};

struct LayerCheckResult {
  GradCheckReport report64;  // 64-bit analytic vs 64-bit differences
  GradCheckReport report32;  // 32-bit analytic vs 64-bit differences
  // Largest gradient norm among parameters expected to receive exactly zero
  // gradient, relative to the largest norm overall (64-bit analytic).
  double vanishing = 0;
  double worst() const { return std::max(report64.max_relative_error, report32.max_relative_error); }
};

// Scalar loss <y, w> against a fixed pseudo-random w.
template <class R>
BasicTensor<R> projected_loss(const BasicTensor<R>& y) {
  auto w = random_tensor<R>(y.shape(), 4242);
  return ops::sum(ops::mul(y, w));
}

// Registers an input tensor as a parameter so its gradient is checked too.
template <class R>
BasicTensor<R> input_parameter(ParameterList<R>& params, nn::Initializer& init, Shape shape, double scale = 1.0) {
  auto x = BasicTensor<R>::zeros(std::move(shape));
  for (auto& v : x.data()) v = static_cast<R>(scale * init.gaussian());
  x.set_requires_grad(true);
  params.push_back({"input", x});
  return x;
}

// `setup(params, init)` creates parameters (and the input) and returns the
// forward closure; it is invoked for R = double and R = float. Parameters
// listed in `zero_grad` have an identically zero true gradient; a relative
// comparison would only measure noise, so they are reported in `vanishing`.
template <class Setup>
LayerCheckResult check_layer(Setup&& setup, std::uint64_t seed, std::size_t coord_limit = 48, double h = 1e-5,
                             const std::vector<std::string>& zero_grad = {}) {
  ParameterList<double> p64;
  nn::Initializer i64(seed);
  std::function<Tensor64()> f64 = setup(p64, i64);
  ParameterList<float> p32;
  nn::Initializer i32(seed);
  std::function<Tensor()> f32 = setup(p32, i32);

  const auto coords = probe_coordinates(p64, coord_limit);
  std::vector<std::string> names;
  for (const auto& p : p64) names.push_back(p.name);
  auto loss64 = [&] { return projected_loss(f64()); };
  auto loss32 = [&] { return projected_loss(f32()); };
  auto reference = central_differences(loss64, p64, h, coords);
  auto a64 = analytic_gradients<double>(loss64, p64, coords);
  auto a32 = analytic_gradients<float>(loss32, p32, coords);
  LayerCheckResult res;
  double largest = 0, vanishing = 0;
  for (std::size_t t = 0; t < names.size(); ++t) {
    double n = 0;
    for (double v : a64[t]) n += v * v;
    n = std::sqrt(n);
    const bool excluded = std::find(zero_grad.begin(), zero_grad.end(), names[t]) != zero_grad.end();
    (excluded ? vanishing : largest) = std::max(excluded ? vanishing : largest, n);
  }
  res.vanishing = largest > 0 ? vanishing / largest : vanishing;
  for (std::size_t t = names.size(); t-- > 0;) {
    if (std::find(zero_grad.begin(), zero_grad.end(), names[t]) == zero_grad.end()) continue;
    names.erase(names.begin() + t);
    reference.erase(reference.begin() + t);
    a64.erase(a64.begin() + t);
    a32.erase(a32.begin() + t);
  }
  res.report64 = compare_gradients(a64, reference, names);
  res.report32 = compare_gradients(a32, reference, names);
  return res;
}

}  // namespace saufno::testing
