#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "saufno/tensor/tensor.hpp"

namespace saufno::nn {

template <class R>
using T = BasicTensor<R>;

// Retained Fourier modes. Each band is a real tensor [Ci, Co, m1, m2, 2]
// holding (re, im): `low` covers rows [0, m1) of the spectrum, `high` covers
// the negative frequencies, rows [H - m1, H), minus any rows already in `low`.
template <class R>
struct SpectralParams {
  T<R> low, high;
};

template <class R>
struct FourierParams {
  SpectralParams<R> spectral;
  T<R> w, b;  // [c, c], [c]
};

template <class R>
struct ConvParams {
  T<R> k, b;  // [Co, Ci, 3, 3], [Co]
};

// Encoder: 4 levels of two 3x3 conv + ReLU, 2x2 max-pool between levels.
// Decoder: 3 levels of bilinear 2x upsampling, skip concatenation and two
// 3x3 conv + ReLU. A final 1x1 conv maps back to c channels.
template <class R>
struct UNetParams {
  std::vector<ConvParams<R>> enc;  // 8
  std::vector<ConvParams<R>> dec;  // 6
  T<R> out_w, out_b;               // [c, ladder[0]], [c]
};

template <class R>
struct UFourierParams {
  SpectralParams<R> spectral;
  UNetParams<R> unet;
  T<R> w, b;
};

template <class R>
struct AttentionParams {
  T<R> wh, bh;  // value  [d, c], [d]
  T<R> wq, bq;  // query
  T<R> wk, bk;  // key
  T<R> wo, bo;  // output [c, d], [c]
};

template <class R>
T<R> spectral_conv(const T<R>& x, const SpectralParams<R>& p);

// gelu(W x + b + spectral_conv(x))
template <class R>
T<R> fourier_layer(const T<R>& x, const FourierParams<R>& p);

template <class R>
T<R> unet_forward(const T<R>& x, const UNetParams<R>& p);

// gelu(spectral_conv(x) + unet(x) + W x + b)
template <class R>
T<R> u_fourier_layer(const T<R>& x, const UFourierParams<R>& p);

// Non-local block: scores s_ij = q_i . k_j / sqrt(d), row softmax, attended_i =
// sum_j A[i,j] v_j, output x + W_o attended + b_o. Without a tape the block
// runs a fused row-blocked kernel that never materializes the N x N matrix.
template <class R>
T<R> attention_block(const T<R>& x, const AttentionParams<R>& p);

// Seeded parameter initialization, portable across standard libraries.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian();

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0;
};

template <class R>
class ParameterBuilder {
 public:
  ParameterBuilder(Initializer& init, ParameterList<R>& params) : init_(init), params_(params) {}

  T<R> zeros(const std::string& name, Shape shape);
  // He-style uniform in +-sqrt(6 / fan_in).
  T<R> fan_in_uniform(const std::string& name, Shape shape, std::int64_t fan_in);
  // Real and imaginary parts ~ N(0, 1) * scale.
  T<R> complex_gaussian(const std::string& name, Shape shape, double scale);

  SpectralParams<R> spectral(const std::string& prefix, int cin, int cout, int m1, int m2);
  FourierParams<R> fourier(const std::string& prefix, int c, int m1, int m2);
  ConvParams<R> conv3x3(const std::string& prefix, int cin, int cout);
  UNetParams<R> unet(const std::string& prefix, int c, const std::array<int, 4>& ladder);
  UFourierParams<R> u_fourier(const std::string& prefix, int c, int m1, int m2, const std::array<int, 4>& ladder);
  AttentionParams<R> attention(const std::string& prefix, int c, int d);

 private:
  T<R> add(const std::string& name, T<R> t);

  Initializer& init_;
  ParameterList<R>& params_;
};

}  // namespace saufno::nn
