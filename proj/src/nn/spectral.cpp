#include <complex>

#include "saufno/error.hpp"
#include "saufno/nn/layers.hpp"
#include "saufno/tensor/autograd.hpp"
#include "saufno/tensor/fft.hpp"

namespace saufno::nn {

namespace {

struct ModeBands {
  std::int64_t h, w, wf, m1, m2;
  std::int64_t high_begin;  // first spectrum row served by the high band

  // Band row for spectrum row r: (band, row) with band 0 = low, 1 = high, -1 = dropped.
  std::pair<int, std::int64_t> locate(std::int64_t r) const {
    if (r < m1) return {0, r};
    if (r >= high_begin) return {1, r - (h - m1)};
    return {-1, 0};
  }
};

}  // namespace

template <class R>
T<R> spectral_conv(const T<R>& x, const SpectralParams<R>& p) {
  using C = std::complex<R>;
  if (x.ndim() != 4) throw ShapeError("spectral_conv: expected [B,C,H,W], got " + shape_str(x.shape()));
  const auto& ws = p.low.shape();
  if (ws.size() != 5 || ws[4] != 2 || p.high.shape() != ws)
    throw ShapeError("spectral_conv: weights must be two [Ci,Co,m1,m2,2] tensors");
  const std::int64_t B = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t co = ws[1];
  if (ws[0] != ci) throw ShapeError("spectral_conv: weight expects " + std::to_string(ws[0]) + " input channels");
  const ModeBands mb{h, w, w / 2 + 1, ws[2], ws[3], std::max(ws[2], h - ws[2])};
  if (h < 2 || w < 2) throw ShapeError("spectral_conv: grid must be at least 2x2");
  if (mb.m1 > h || mb.m2 > mb.wf)
    throw Error("ModesExceedGrid", "modes (" + std::to_string(mb.m1) + "," + std::to_string(mb.m2) +
                                       ") exceed the " + std::to_string(h) + "x" + std::to_string(w) + " grid");
  const std::int64_t hw = h * w, hf = h * mb.wf;

  // Spectrum of every input plane, kept for the backward pass.
  auto xs = std::make_shared<std::vector<C>>(static_cast<std::size_t>(B * ci * hf));
  for (std::int64_t pl = 0; pl < B * ci; ++pl) fft::rfft2_plane(x.ptr() + pl * hw, h, w, xs->data() + pl * hf, mb.m2);

  const auto* wl = reinterpret_cast<const C*>(p.low.ptr());
  const auto* wh = reinterpret_cast<const C*>(p.high.ptr());
  const std::int64_t band = mb.m1 * mb.m2;
  auto weight_at = [&](int which, std::int64_t i, std::int64_t o, std::int64_t row, std::int64_t col) {
    return (which == 0 ? wl : wh)[(i * co + o) * band + row * mb.m2 + col];
  };

  std::vector<C> ys(static_cast<std::size_t>(hf), C(0));
  auto out = T<R>::zeros({B, co, h, w});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < co; ++o) {
      std::fill(ys.begin(), ys.end(), C(0));
      for (std::int64_t r = 0; r < h; ++r) {
        const auto [which, row] = mb.locate(r);
        if (which < 0) continue;
        for (std::int64_t c = 0; c < mb.m2; ++c) {
          C acc(0);
          for (std::int64_t i = 0; i < ci; ++i) acc += fft::mul((*xs)[(b * ci + i) * hf + r * mb.wf + c], weight_at(which, i, o, row, c));
          ys[r * mb.wf + c] = acc;
        }
      }
      fft::irfft2_plane(ys.data(), h, w, out.ptr() + (b * co + o) * hw, mb.m2);
    }

  const auto low = p.low, high = p.high;
  record<R>(out, "spectral_conv", {&x, &low, &high}, [x, low, high, xs, mb, B, ci, co, hw, hf](std::span<const R> g) {
    auto gx = grad_sink(x);
    auto gl = grad_sink(low);
    auto ghi = grad_sink(high);
    const std::int64_t band = mb.m1 * mb.m2;
    const auto* wl = reinterpret_cast<const C*>(low.ptr());
    const auto* wh = reinterpret_cast<const C*>(high.ptr());
    auto* gwl = gl.empty() ? nullptr : reinterpret_cast<C*>(gl.data());
    auto* gwh = ghi.empty() ? nullptr : reinterpret_cast<C*>(ghi.data());

    std::vector<C> gs(static_cast<std::size_t>(B * co * hf));
    for (std::int64_t pl = 0; pl < B * co; ++pl) fft::rfft2_plane(g.data() + pl * hw, mb.h, mb.w, gs.data() + pl * hf, mb.m2);

    // d/dW = sum_b conj(X) G c / (HW), with c = 1 on self-conjugate columns.
    if (gwl || gwh) {
      const R inv = R(1) / static_cast<R>(hw);
      for (std::int64_t r = 0; r < mb.h; ++r) {
        const auto [which, row] = mb.locate(r);
        C* gw = which == 0 ? gwl : gwh;
        if (which < 0 || !gw) continue;
        for (std::int64_t c = 0; c < mb.m2; ++c) {
          const bool self_conj = c == 0 || (mb.w % 2 == 0 && c == mb.w / 2);
          const R scale = (self_conj ? R(1) : R(2)) * inv;
          for (std::int64_t i = 0; i < ci; ++i)
            for (std::int64_t o = 0; o < co; ++o) {
              C acc(0);
              for (std::int64_t b = 0; b < B; ++b)
                acc += fft::mul_conj((*xs)[(b * ci + i) * hf + r * mb.wf + c], gs[(b * co + o) * hf + r * mb.wf + c]);
              gw[(i * co + o) * band + row * mb.m2 + c] += acc * scale;
            }
        }
      }
    }
    // d/dx = irfft2(sum_o conj(W) G) without the c weights (absorbed by irfft2).
    if (!gx.empty()) {
      std::vector<C> acc(static_cast<std::size_t>(hf));
      AlignedVector<R> plane(static_cast<std::size_t>(hw));
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < ci; ++i) {
          std::fill(acc.begin(), acc.end(), C(0));
          for (std::int64_t r = 0; r < mb.h; ++r) {
            const auto [which, row] = mb.locate(r);
            if (which < 0) continue;
            const C* wt = which == 0 ? wl : wh;
            for (std::int64_t c = 0; c < mb.m2; ++c) {
              C s(0);
              for (std::int64_t o = 0; o < co; ++o)
                s += fft::mul_conj(wt[(i * co + o) * band + row * mb.m2 + c], gs[(b * co + o) * hf + r * mb.wf + c]);
              acc[r * mb.wf + c] = s;
            }
          }
          fft::irfft2_plane(acc.data(), mb.h, mb.w, plane.data(), mb.m2);
          R* dst = gx.data() + (b * ci + i) * hw;
          for (std::int64_t e = 0; e < hw; ++e) dst[e] += plane[e];
        }
    }
  });
  return out;
}

template T<float> spectral_conv(const T<float>&, const SpectralParams<float>&);
template T<double> spectral_conv(const T<double>&, const SpectralParams<double>&);

}  // namespace saufno::nn
