#include "saufno/tensor/adam.hpp"

#include <cmath>

namespace saufno {

Adam::Adam(ParameterList<float> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    state_.m.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    state_.v.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
  }
}

void Adam::step() {
  for (const auto& p : params_)
    for (float g : p.tensor.grad())
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);

  const std::int64_t t = state_.step + 1;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lr = options_.lr, decay = options_.lr * options_.weight_decay;

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& tensor = params_[i].tensor;
    auto data = tensor.data();
    auto grad = tensor.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
      double p = static_cast<double>(data[j]);
      p -= decay * p;
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p -= lr * (mj / bc1) / (std::sqrt(vj / bc2) + options_.eps);
      data[j] = static_cast<float>(p);
    }
  }
  state_.step = t;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::load_state(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size())
    throw ShapeError("adam: optimizer state has " + std::to_string(state.m.size()) + " slots, expected " +
                     std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (state.m[i].size() != static_cast<std::size_t>(params_[i].tensor.numel()) || state.v[i].size() != state.m[i].size())
      throw ShapeError("adam: moment shape mismatch for '" + params_[i].name + "'");
  state_ = std::move(state);
}

}  // namespace saufno
