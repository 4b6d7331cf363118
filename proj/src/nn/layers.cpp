#include "saufno/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "saufno/error.hpp"
#include "saufno/tensor/autograd.hpp"
#include "saufno/tensor/linalg.hpp"
#include "saufno/tensor/ops.hpp"

namespace saufno::nn {

template <class R>
T<R> fourier_layer(const T<R>& x, const FourierParams<R>& p) {
  return ops::gelu(ops::add(ops::linear_channels(x, p.w, p.b), spectral_conv(x, p.spectral)));
}

template <class R>
T<R> unet_forward(const T<R>& x, const UNetParams<R>& p) {
  if (x.ndim() != 4) throw ShapeError("unet: expected [B,C,H,W], got " + shape_str(x.shape()));
  const auto h = x.dim(2), w = x.dim(3);
  if (h % 8 != 0 || w % 8 != 0)
    throw Error("IndivisibleSpatialDims",
                "U-Net needs H and W divisible by 8, got " + std::to_string(h) + "x" + std::to_string(w));
  if (h < 16 || w < 16)
    throw Error("SpatialDimsTooSmall", "U-Net needs H, W >= 16, got " + std::to_string(h) + "x" + std::to_string(w));
  if (p.enc.size() != 8 || p.dec.size() != 6) throw ShapeError("unet: malformed parameters");

  auto block = [](T<R> v, const ConvParams<R>& a, const ConvParams<R>& b) {
    v = ops::relu(ops::conv2d(v, a.k, a.b));
    return ops::relu(ops::conv2d(v, b.k, b.b));
  };
  std::vector<T<R>> skips;
  T<R> v = x;
  for (int level = 0; level < 4; ++level) {
    if (level > 0) v = ops::max_pool2x2(v);
    v = block(v, p.enc[2 * level], p.enc[2 * level + 1]);
    skips.push_back(v);
  }
  for (int level = 2; level >= 0; --level) {
    v = ops::concat_channels(skips[level], ops::upsample_bilinear2x(v));
    const int d = 2 - level;
    v = block(v, p.dec[2 * d], p.dec[2 * d + 1]);
  }
  return ops::linear_channels(v, p.out_w, p.out_b);
}

template <class R>
T<R> u_fourier_layer(const T<R>& x, const UFourierParams<R>& p) {
  auto pointwise = ops::linear_channels(x, p.w, p.b);
  auto sum = ops::add(ops::add(spectral_conv(x, p.spectral), unet_forward(x, p.unet)), pointwise);
  return ops::gelu(sum);
}

namespace {

// Tape-free attention, processed in blocks of query rows so only a
// [rows x N] slab of scores is live at a time.
template <class R>
T<R> attention_fused(const T<R>& x, const AttentionParams<R>& p) {
  using Array = Eigen::Array<R, Eigen::Dynamic, 1>;
  const std::int64_t B = x.dim(0), n = x.dim(2) * x.dim(3);
  const std::int64_t d = p.wq.dim(0);
  auto v = ops::linear_channels(x, p.wh, p.bh);
  auto q = ops::linear_channels(x, p.wq, p.bq);
  auto k = ops::linear_channels(x, p.wk, p.bk);
  const R scale = R(1) / std::sqrt(static_cast<R>(d));
  constexpr std::int64_t kRows = 64;
  AlignedVector<R> qt(static_cast<std::size_t>(n * d)), scores(static_cast<std::size_t>(kRows * n));
  AlignedVector<R> att_t(static_cast<std::size_t>(n * d)), inv_sum(kRows);
  auto attended = T<R>::zeros({B, d, x.dim(2), x.dim(3)});
  for (std::int64_t b = 0; b < B; ++b) {
    const R* qb = q.ptr() + b * d * n;
    const R* kb = k.ptr() + b * d * n;
    const R* vb = v.ptr() + b * d * n;
    for (std::int64_t i = 0; i < d; ++i)
      for (std::int64_t j = 0; j < n; ++j) qt[j * d + i] = qb[i * n + j] * scale;
    for (std::int64_t r0 = 0; r0 < n; r0 += kRows) {
      const std::int64_t rows = std::min(kRows, n - r0);
      linalg::gemm<R>(false, false, rows, n, d, R(1), qt.data() + r0 * d, kb, R(0), scores.data());
      for (std::int64_t r = 0; r < rows; ++r) {
        Eigen::Map<Array> row(scores.data() + r * n, n);
        row = (row - row.maxCoeff()).exp();
        inv_sum[r] = R(1) / row.sum();
      }
      // normalizing the d outputs is cheaper than normalizing n weights
      R* out = att_t.data() + r0 * d;
      linalg::gemm<R>(false, true, rows, d, n, R(1), scores.data(), vb, R(0), out);
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t i = 0; i < d; ++i) out[r * d + i] *= inv_sum[r];
    }
    R* ab = attended.ptr() + b * d * n;
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t i = 0; i < d; ++i) ab[i * n + j] = att_t[j * d + i];
  }
  return ops::add(x, ops::linear_channels(attended, p.wo, p.bo));
}

// attended[b] = V P^T with P = rowsoftmax(Q^T K); q already carries 1/sqrt(d).
// Only P is kept for the backward pass, which works one batch at a time:
//   dV = G P, dP = G^T V, dS = P * (dP - rowsum(P * dP)), dQ = K dS^T, dK = Q dS.
template <class R>
T<R> attention_core(const T<R>& q, const T<R>& k, const T<R>& v) {
  using Array = Eigen::Array<R, Eigen::Dynamic, 1>;
  const std::int64_t B = q.dim(0), d = q.dim(1), n = q.dim(2), dv = v.dim(1);
  auto probs = std::make_shared<AlignedVector<R>>(static_cast<std::size_t>(B * n * n));
  auto out = T<R>::zeros({B, dv, n});
  for (std::int64_t b = 0; b < B; ++b) {
    R* pb = probs->data() + b * n * n;
    linalg::gemm<R>(true, false, n, n, d, R(1), q.ptr() + b * d * n, k.ptr() + b * d * n, R(0), pb);
    for (std::int64_t r = 0; r < n; ++r) {
      Eigen::Map<Array> row(pb + r * n, n);
      row = (row - row.maxCoeff()).exp();
      row *= R(1) / row.sum();
    }
    linalg::gemm<R>(false, true, dv, n, n, R(1), v.ptr() + b * dv * n, pb, R(0), out.ptr() + b * dv * n);
  }
  record<R>(out, "attention_core", {&q, &k, &v}, [q, k, v, probs, B, d, n, dv](std::span<const R> g) {
    auto gq = grad_sink(q);
    auto gk = grad_sink(k);
    auto gv = grad_sink(v);
    AlignedVector<R> ds(static_cast<std::size_t>(n * n));
    for (std::int64_t b = 0; b < B; ++b) {
      const R* pb = probs->data() + b * n * n;
      const R* gb = g.data() + b * dv * n;
      if (!gv.empty()) linalg::gemm<R>(false, false, dv, n, n, R(1), gb, pb, R(1), gv.data() + b * dv * n);
      if (gq.empty() && gk.empty()) continue;
      linalg::gemm<R>(true, false, n, n, dv, R(1), gb, v.ptr() + b * dv * n, R(0), ds.data());
      for (std::int64_t r = 0; r < n; ++r) {
        Eigen::Map<const Array> pr(pb + r * n, n);
        Eigen::Map<Array> dr(ds.data() + r * n, n);
        const R dot = (pr * dr).sum();
        dr = pr * (dr - dot);
      }
      if (!gq.empty())
        linalg::gemm<R>(false, true, d, n, n, R(1), k.ptr() + b * d * n, ds.data(), R(1), gq.data() + b * d * n);
      if (!gk.empty())
        linalg::gemm<R>(false, false, d, n, n, R(1), q.ptr() + b * d * n, ds.data(), R(1), gk.data() + b * d * n);
    }
  });
  return out;
}

}  // namespace

template <class R>
T<R> attention_block(const T<R>& x, const AttentionParams<R>& p) {
  if (x.ndim() != 4) throw ShapeError("attention: expected [B,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t B = x.dim(0), h = x.dim(2), w = x.dim(3), n = h * w;
  const std::int64_t d = p.wq.dim(0);
  if (!any_requires_grad<R>({&x, &p.wh, &p.bh, &p.wq, &p.bq, &p.wk, &p.bk, &p.wo, &p.bo}))
    return attention_fused(x, p);

  auto flat = [&](const T<R>& t) { return ops::reshape(t, {B, d, n}); };
  auto v = flat(ops::linear_channels(x, p.wh, p.bh));
  // 1/sqrt(d) applied to q: same scores, one [B, d, N] pass instead of [B, N, N]
  auto q = flat(ops::scale(ops::linear_channels(x, p.wq, p.bq), R(1) / std::sqrt(static_cast<R>(d))));
  auto k = flat(ops::linear_channels(x, p.wk, p.bk));
  auto attended = attention_core(q, k, v);  // [B, d, N]: column i = sum_j a[i, j] v_j
  auto proj = ops::linear_channels(ops::reshape(attended, {B, d, h, w}), p.wo, p.bo);
  return ops::add(x, proj);
}

double Initializer::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2 * std::numbers::pi * u2);
}

template <class R>
T<R> ParameterBuilder<R>::add(const std::string& name, T<R> t) {
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

template <class R>
T<R> ParameterBuilder<R>::zeros(const std::string& name, Shape shape) {
  return add(name, T<R>::zeros(std::move(shape)));
}

template <class R>
T<R> ParameterBuilder<R>::fan_in_uniform(const std::string& name, Shape shape, std::int64_t fan_in) {
  auto t = T<R>::zeros(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<R>(init_.uniform(-bound, bound));
  return add(name, t);
}

template <class R>
T<R> ParameterBuilder<R>::complex_gaussian(const std::string& name, Shape shape, double scale) {
  auto t = T<R>::zeros(std::move(shape));
  for (auto& v : t.data()) v = static_cast<R>(scale * init_.gaussian());
  return add(name, t);
}

template <class R>
SpectralParams<R> ParameterBuilder<R>::spectral(const std::string& prefix, int cin, int cout, int m1, int m2) {
  const double scale = 1.0 / (static_cast<double>(cin) * cout);
  SpectralParams<R> p;
  p.low = complex_gaussian(prefix + ".low", {cin, cout, m1, m2, 2}, scale);
  p.high = complex_gaussian(prefix + ".high", {cin, cout, m1, m2, 2}, scale);
  return p;
}

template <class R>
FourierParams<R> ParameterBuilder<R>::fourier(const std::string& prefix, int c, int m1, int m2) {
  FourierParams<R> p;
  p.spectral = spectral(prefix + ".spectral", c, c, m1, m2);
  p.w = fan_in_uniform(prefix + ".w", {c, c}, c);
  p.b = zeros(prefix + ".b", {c});
  return p;
}

template <class R>
ConvParams<R> ParameterBuilder<R>::conv3x3(const std::string& prefix, int cin, int cout) {
  ConvParams<R> p;
  p.k = fan_in_uniform(prefix + ".k", {cout, cin, 3, 3}, static_cast<std::int64_t>(cin) * 9);
  p.b = zeros(prefix + ".b", {cout});
  return p;
}

template <class R>
UNetParams<R> ParameterBuilder<R>::unet(const std::string& prefix, int c, const std::array<int, 4>& ladder) {
  UNetParams<R> p;
  int in = c;
  for (int level = 0; level < 4; ++level) {
    const std::string tag = prefix + ".enc" + std::to_string(level);
    p.enc.push_back(conv3x3(tag + ".conv0", in, ladder[level]));
    p.enc.push_back(conv3x3(tag + ".conv1", ladder[level], ladder[level]));
    in = ladder[level];
  }
  for (int level = 2; level >= 0; --level) {
    const std::string tag = prefix + ".dec" + std::to_string(level);
    p.dec.push_back(conv3x3(tag + ".conv0", ladder[level] + ladder[level + 1], ladder[level]));
    p.dec.push_back(conv3x3(tag + ".conv1", ladder[level], ladder[level]));
  }
  p.out_w = fan_in_uniform(prefix + ".out.w", {c, ladder[0]}, ladder[0]);
  p.out_b = zeros(prefix + ".out.b", {c});
  return p;
}

template <class R>
UFourierParams<R> ParameterBuilder<R>::u_fourier(const std::string& prefix, int c, int m1, int m2,
                                                 const std::array<int, 4>& ladder) {
  UFourierParams<R> p;
  p.spectral = spectral(prefix + ".spectral", c, c, m1, m2);
  p.unet = unet(prefix + ".unet", c, ladder);
  p.w = fan_in_uniform(prefix + ".w", {c, c}, c);
  p.b = zeros(prefix + ".b", {c});
  return p;
}

template <class R>
AttentionParams<R> ParameterBuilder<R>::attention(const std::string& prefix, int c, int d) {
  AttentionParams<R> p;
  p.wh = fan_in_uniform(prefix + ".wh", {d, c}, c);
  p.bh = zeros(prefix + ".bh", {d});
  p.wq = fan_in_uniform(prefix + ".wq", {d, c}, c);
  p.bq = zeros(prefix + ".bq", {d});
  p.wk = fan_in_uniform(prefix + ".wk", {d, c}, c);
  p.bk = zeros(prefix + ".bk", {d});
  // Zero output projection: the block starts as the identity map.
  p.wo = zeros(prefix + ".wo", {c, d});
  p.bo = zeros(prefix + ".bo", {c});
  return p;
}

#define SAUFNO_INSTANTIATE(R)                                                \
  template T<R> fourier_layer(const T<R>&, const FourierParams<R>&);         \
  template T<R> unet_forward(const T<R>&, const UNetParams<R>&);             \
  template T<R> u_fourier_layer(const T<R>&, const UFourierParams<R>&);      \
  template T<R> attention_block(const T<R>&, const AttentionParams<R>&);     \
  template class ParameterBuilder<R>;

SAUFNO_INSTANTIATE(float)
SAUFNO_INSTANTIATE(double)

}  // namespace saufno::nn
