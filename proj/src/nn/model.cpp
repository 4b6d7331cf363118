#include "saufno/nn/model.hpp"

#include <set>

#include "saufno/error.hpp"
#include "saufno/tensor/ops.hpp"

namespace saufno::nn {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::Fno:
      return "fno";
    case Arch::UFno:
      return "ufno";
    case Arch::SauFno:
      return "sau_fno";
  }
  return "?";
}

Arch parse_arch(const std::string& s) {
  if (s == "fno") return Arch::Fno;
  if (s == "ufno") return Arch::UFno;
  if (s == "sau_fno") return Arch::SauFno;
  throw Error("InvalidConfig", "unknown arch '" + s + "' (expected fno, ufno or sau_fno)");
}

void ModelConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error("InvalidConfig", m); };
  if (in_channels < 1 || out_channels < 1) bad("channel counts must be >= 1");
  if (width < 1) bad("width must be >= 1");
  if (modes1 < 1 || modes2 < 1) bad("modes must be >= 1");
  if (fourier_layers < 0) bad("fourier_layers must be >= 0");
  if (ufourier_layers < 1) bad("ufourier_layers must be >= 1");
  if (attention_dim < 1) bad("attention_dim must be >= 1");
  for (int c : ladder)
    if (c < 1) bad("U-Net ladder entries must be >= 1");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"arch", arch_name(c.arch)},
          {"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"width", c.width},
          {"modes", {c.modes1, c.modes2}},
          {"fourier_layers", c.fourier_layers},
          {"ufourier_layers", c.ufourier_layers},
          {"attention_dim", c.attention_dim},
          {"ladder", c.ladder},
          {"coord_channels", c.coord_channels}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  static const std::set<std::string> known{"arch",           "in_channels",     "out_channels",
                                           "width",          "modes",           "fourier_layers",
                                           "ufourier_layers", "attention_dim",  "ladder",
                                           "coord_channels"};
  if (!j.is_object()) throw Error("InvalidConfig", "model config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error("InvalidConfig", "model config: unknown key '" + key + "'");
  try {
    if (j.contains("arch")) c.arch = parse_arch(j["arch"].get<std::string>());
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.width = j.value("width", c.width);
    if (j.contains("modes")) {
      c.modes1 = j["modes"].at(0).get<int>();
      c.modes2 = j["modes"].at(1).get<int>();
    }
    c.fourier_layers = j.value("fourier_layers", c.fourier_layers);
    c.ufourier_layers = j.value("ufourier_layers", c.ufourier_layers);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.ladder = j.value("ladder", c.ladder);
    c.coord_channels = j.value("coord_channels", c.coord_channels);
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidConfig", std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <class R>
BasicModel<R>::BasicModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed);
  ParameterBuilder<R> pb(init, params_);
  const int c = cfg_.width;
  lift_w_ = pb.fan_in_uniform("lift.w", {c, cfg_.lifted_inputs()}, cfg_.lifted_inputs());
  lift_b_ = pb.zeros("lift.b", {c});
  const bool plain = cfg_.arch == Arch::Fno;
  const int n_fourier = cfg_.fourier_layers + (plain ? cfg_.ufourier_layers : 0);
  for (int i = 0; i < n_fourier; ++i)
    fourier_.push_back(pb.fourier("fourier" + std::to_string(i), c, cfg_.modes1, cfg_.modes2));
  if (!plain)
    for (int i = 0; i < cfg_.ufourier_layers; ++i)
      ufourier_.push_back(pb.u_fourier("ufourier" + std::to_string(i), c, cfg_.modes1, cfg_.modes2, cfg_.ladder));
  proj1_w_ = pb.fan_in_uniform("proj1.w", {4 * c, c}, c);
  proj1_b_ = pb.zeros("proj1.b", {4 * c});
  proj2_w_ = pb.fan_in_uniform("proj2.w", {cfg_.out_channels, 4 * c}, 4 * c);
  proj2_b_ = pb.zeros("proj2.b", {cfg_.out_channels});
  // Created last so that ufno and sau_fno draw identical weights elsewhere.
  if (cfg_.arch == Arch::SauFno) attention_ = pb.attention("attention", c, cfg_.attention_dim);
}

template <class R>
T<R> BasicModel<R>::forward(const T<R>& x) const {
  if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels)
    throw ShapeError("model: expected [B," + std::to_string(cfg_.in_channels) + ",H,W] input, got " +
                     shape_str(x.shape()));
  T<R> v = x;
  if (cfg_.coord_channels) {
    const auto B = x.dim(0), h = x.dim(2), w = x.dim(3);
    auto coords = T<R>::zeros({B, 2, h, w});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t col = 0; col < w; ++col) {
          coords.data()[((b * 2 + 0) * h + r) * w + col] = static_cast<R>((col + 0.5) / w);
          coords.data()[((b * 2 + 1) * h + r) * w + col] = static_cast<R>((r + 0.5) / h);
        }
    v = ops::concat_channels(v, coords);
  }
  v = ops::linear_channels(v, lift_w_, lift_b_);
  for (const auto& p : fourier_) v = fourier_layer(v, p);
  for (const auto& p : ufourier_) v = u_fourier_layer(v, p);
  if (cfg_.arch == Arch::SauFno) v = attention_block(v, attention_);
  v = ops::gelu(ops::linear_channels(v, proj1_w_, proj1_b_));
  return ops::linear_channels(v, proj2_w_, proj2_b_);
}

template <class R>
std::int64_t BasicModel<R>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class R>
template <class S>
void BasicModel<R>::load_values(const ParameterList<S>& src) {
  if (src.size() != params_.size()) throw Error("IncompatibleParameters", "parameter count differs");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != params_[i].name || src[i].tensor.shape() != params_[i].tensor.shape())
      throw Error("IncompatibleParameters", "parameter " + src[i].name + " does not match " + params_[i].name);
    auto dst = params_[i].tensor.data();
    auto from = src[i].tensor.data();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] = static_cast<R>(from[e]);
  }
}

template class BasicModel<float>;
template class BasicModel<double>;
template void BasicModel<float>::load_values(const ParameterList<float>&);
template void BasicModel<float>::load_values(const ParameterList<double>&);
template void BasicModel<double>::load_values(const ParameterList<float>&);
template void BasicModel<double>::load_values(const ParameterList<double>&);

}  // namespace saufno::nn
