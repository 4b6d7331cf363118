#pragma once

// Finite-difference checks of every layer and of a tiny full model, on
// inputs no larger than [1, 2, 16, 16]. Shared by the unit tests and the
// acceptance run.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "saufno/nn/model.hpp"
#include "support/layer_check.hpp"

namespace saufno::testing {

struct NamedLayerCheck {
  std::string name;
  LayerCheckResult result;
};

inline std::vector<NamedLayerCheck> layer_fd_suite() {
  using namespace saufno::nn;
  std::vector<NamedLayerCheck> out;
  out.push_back({"spectral_conv", check_layer(
                              [](auto& params, Initializer& init) {
                                using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
                                auto x = input_parameter<R>(params, init, {1, 2, 8, 8});
                                auto p = ParameterBuilder<R>(init, params).spectral("s", 2, 3, 3, 4);
                                // larger weights than the default init so the check is not trivially small
                                for (auto* t : {&p.low, &p.high})
                                  for (auto& v : t->data()) v *= R(20);
                                return std::function<BasicTensor<R>()>([x, p] { return spectral_conv(x, p); });
                              },
                              1)});
  out.push_back({"fourier_layer", check_layer(
                              [](auto& params, Initializer& init) {
                                using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
                                auto x = input_parameter<R>(params, init, {1, 2, 8, 8});
                                auto p = ParameterBuilder<R>(init, params).fourier("f", 2, 4, 3);
                                return std::function<BasicTensor<R>()>([x, p] { return fourier_layer(x, p); });
                              },
                              2)});
  out.push_back({"unet_forward", check_layer(
                             [](auto& params, Initializer& init) {
                               using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
                               auto x = input_parameter<R>(params, init, {1, 2, 16, 16});
                               auto p = ParameterBuilder<R>(init, params).unet("u", 2, {4, 8, 16, 32});
                               return std::function<BasicTensor<R>()>([x, p] { return unet_forward(x, p); });
                             },
                             3)});
  out.push_back({"u_fourier_layer", check_layer(
                                [](auto& params, Initializer& init) {
                                  using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
                                  auto x = input_parameter<R>(params, init, {1, 2, 16, 16});
                                  auto p = ParameterBuilder<R>(init, params).u_fourier("uf", 2, 4, 4, {4, 8, 16, 32});
                                  return std::function<BasicTensor<R>()>([x, p] { return u_fourier_layer(x, p); });
                                },
                                4)});
  out.push_back({"attention_block", check_layer(
                                [](auto& params, Initializer& init) {
                                  using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
                                  auto x = input_parameter<R>(params, init, {1, 2, 8, 8});
                                  auto p = ParameterBuilder<R>(init, params).attention("a", 2, 4);
                                  // the default zero output projection would hide the attention path
                                  for (auto& v : p.wo.data()) v = static_cast<R>(init.uniform(-1, 1));
                                  return std::function<BasicTensor<R>()>([x, p] { return attention_block(x, p); });
                                },
                                // a key bias shifts each score row by a constant, which softmax ignores
                                5, 48, 1e-5, {"a.bk"})});
  out.push_back({"model (tiny sau_fno)",
         check_layer(
             [](auto& params, Initializer& init) {
               using R = typename testing::scalar_of<std::decay_t<decltype(params)>>::type;
               auto x = input_parameter<R>(params, init, {1, 2, 16, 16});
               ModelConfig cfg;
               cfg.width = 4;
               cfg.modes1 = cfg.modes2 = 4;
               cfg.fourier_layers = 1;
               cfg.ufourier_layers = 1;
               cfg.attention_dim = 4;
               cfg.ladder = {4, 8, 16, 32};
               auto model = std::make_shared<BasicModel<R>>(cfg, 6);
               for (auto& p : model->parameters()) {
                 if (p.name == "attention.wo")
                   for (auto& v : p.tensor.data()) v = static_cast<R>(init.uniform(-1, 1));
                 params.push_back(p);
               }
               return std::function<BasicTensor<R>()>([x, model] { return model->forward(x); });
             },
             6, 16, 1e-5, {"attention.bk"})});
  return out;
}

}  // namespace saufno::testing
