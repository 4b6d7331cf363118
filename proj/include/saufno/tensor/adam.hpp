#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saufno/tensor/tensor.hpp"

namespace saufno {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p <- p - lr*wd*p before the moment update
};

struct NonFiniteGradient : std::runtime_error {
  NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), parameter(param) {}
  std::string parameter;
};

// Per-parameter moments plus the shared step counter.
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

class Adam {
 public:
  Adam(ParameterList<float> params, AdamOptions options);

  // One bias-corrected update from the parameters' accumulated gradients.
  // Parameters with no gradient are treated as having a zero gradient.
  // Throws NonFiniteGradient (without touching any parameter) on NaN/Inf.
  void step();
  void zero_grad();

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }
  const ParameterList<float>& parameters() const { return params_; }

  const AdamState& state() const { return state_; }
  // Restores moments saved from an optimizer over the same parameter list.
  void load_state(AdamState state);

 private:
  ParameterList<float> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace saufno
