#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "saufno/nn/layers.hpp"

namespace saufno::nn {

enum class Arch { Fno, UFno, SauFno };

std::string arch_name(Arch a);
Arch parse_arch(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::SauFno;
  int in_channels = 2;   // device layers
  int out_channels = 2;  // device layers
  int width = 16;
  int modes1 = 8, modes2 = 8;
  int fourier_layers = 2;   // L
  int ufourier_layers = 2;  // M; plain FNO uses Fourier layers here too
  int attention_dim = 16;
  std::array<int, 4> ladder{16, 32, 64, 128};
  bool coord_channels = false;  // append normalized x, y inputs

  int lifted_inputs() const { return in_channels + (coord_channels ? 2 : 0); }
  void validate() const;
};

nlohmann::json config_to_json(const ModelConfig& c);
// Missing keys keep their defaults.
ModelConfig config_from_json(const nlohmann::json& j);

// Lift (1x1) -> L Fourier layers -> M U-Fourier layers -> attention on the
// final feature map -> projection (1x1, c -> 4c, GELU, 4c -> out).
// `fno` replaces the U-Fourier layers by Fourier layers and drops attention;
// `ufno` drops attention only. Parameter shapes never depend on H or W.
template <class R>
class BasicModel {
 public:
  BasicModel(const ModelConfig& cfg, std::uint64_t seed);

  // x[B, in_channels, H, W] -> [B, out_channels, H, W]
  T<R> forward(const T<R>& x) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterList<R>& parameters() { return params_; }
  const ParameterList<R>& parameters() const { return params_; }
  std::int64_t parameter_count() const;

  // Copies values from a parameter list with the same names and shapes.
  template <class S>
  void load_values(const ParameterList<S>& src);

  const std::vector<FourierParams<R>>& fourier() const { return fourier_; }
  const std::vector<UFourierParams<R>>& u_fourier() const { return ufourier_; }
  const AttentionParams<R>& attention() const { return attention_; }

 private:
  ModelConfig cfg_;
  ParameterList<R> params_;
  T<R> lift_w_, lift_b_;
  std::vector<FourierParams<R>> fourier_;
  std::vector<UFourierParams<R>> ufourier_;
  AttentionParams<R> attention_;
  T<R> proj1_w_, proj1_b_, proj2_w_, proj2_b_;
};

using Model = BasicModel<float>;

}  // namespace saufno::nn
