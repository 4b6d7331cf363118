#include "saufno/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "saufno/tensor/linalg.hpp"

namespace saufno::ops {

namespace {

template <class R>
void require_same_shape(const T<R>& a, const T<R>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class R>
void require_rank(const T<R>& x, std::size_t rank, const char* op) {
  if (x.ndim() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
}

// Weak handle to an op's own output so a backward closure can read it without
// forming a reference cycle through the tape node.
template <class R>
std::weak_ptr<TensorStorage<R>> weak(const T<R>& t) {
  return t.storage();
}

template <class R>
struct Dims4 {
  std::int64_t b, c, h, w;
};

template <class R>
Dims4<R> dims4(const T<R>& x, const char* op) {
  require_rank(x, 4, op);
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

template <class R>
T<R> add(const T<R>& a, const T<R>& b) {
  require_same_shape(a, b, "add");
  auto out = T<R>::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  record<R>(out, "add", {&a, &b}, [a, b](std::span<const R> g) {
    for (const T<R>* t : {&a, &b}) {
      auto s = grad_sink(*t);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
    }
  });
  return out;
}

template <class R>
T<R> sub(const T<R>& a, const T<R>& b) {
  require_same_shape(a, b, "sub");
  auto out = T<R>::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  record<R>(out, "sub", {&a, &b}, [a, b](std::span<const R> g) {
    auto sa = grad_sink(a);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
    auto sb = grad_sink(b);
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] -= g[i];
  });
  return out;
}

template <class R>
T<R> mul(const T<R>& a, const T<R>& b) {
  require_same_shape(a, b, "mul");
  auto out = T<R>::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  record<R>(out, "mul", {&a, &b}, [a, b](std::span<const R> g) {
    auto sa = grad_sink(a);
    auto yb = b.data();
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i] * yb[i];
    auto sb = grad_sink(b);
    auto xa = a.data();
    for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += g[i] * xa[i];
  });
  return out;
}

template <class R>
T<R> scale(const T<R>& a, R factor) {
  auto out = T<R>::zeros(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  record<R>(out, "scale", {&a}, [a, factor](std::span<const R> g) {
    auto s = grad_sink(a);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i] * factor;
  });
  return out;
}

template <class R>
T<R> sum(const T<R>& a) {
  R acc = 0;
  for (R v : a.data()) acc += v;
  auto out = T<R>::scalar(acc);
  record<R>(out, "sum", {&a}, [a](std::span<const R> g) {
    auto s = grad_sink(a);
    for (auto& v : s) v += g[0];
  });
  return out;
}

template <class R>
T<R> mean(const T<R>& a) {
  return scale(sum(a), R(1) / static_cast<R>(a.numel()));
}

template <class R>
T<R> gelu(const T<R>& x) {
  constexpr R inv_sqrt2 = R(1) / std::numbers::sqrt2_v<R>;
  auto out = T<R>::zeros(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = R(0.5) * in[i] * (R(1) + std::erf(in[i] * inv_sqrt2));
  record<R>(out, "gelu", {&x}, [x](std::span<const R> g) {
    constexpr R inv_sqrt2pi = std::numbers::inv_sqrtpi_v<R> * inv_sqrt2;
    auto s = grad_sink(x);
    auto in = x.data();
    for (std::size_t i = 0; i < s.size(); ++i) {
      const R v = in[i];
      const R cdf = R(0.5) * (R(1) + std::erf(v * inv_sqrt2));
      const R pdf = inv_sqrt2pi * std::exp(R(-0.5) * v * v);
      s[i] += g[i] * (cdf + v * pdf);
    }
  });
  return out;
}

template <class R>
T<R> relu(const T<R>& x) {
  auto out = T<R>::zeros(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > R(0) ? in[i] : R(0);
  record<R>(out, "relu", {&x}, [x](std::span<const R> g) {
    auto s = grad_sink(x);
    auto in = x.data();
    for (std::size_t i = 0; i < s.size(); ++i)
      if (in[i] > R(0)) s[i] += g[i];
  });
  return out;
}

template <class R>
T<R> softmax(const T<R>& x, int axis) {
  const int rank = static_cast<int>(x.ndim());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
  std::int64_t outer = 1, inner = 1;
  const std::int64_t n = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= x.dim(i);

  auto out = T<R>::zeros(x.shape());
  const R* in = x.ptr();
  R* o = out.ptr();
  using Array = Eigen::Array<R, Eigen::Dynamic, 1>;
  if (inner == 1) {
    // contiguous rows: vectorized exp
    for (std::int64_t a = 0; a < outer; ++a) {
      Eigen::Map<const Array> row_in(in + a * n, n);
      Eigen::Map<Array> row(o + a * n, n);
      row = (row_in - row_in.maxCoeff()).exp();
      row *= R(1) / row.sum();
    }
  }
  for (std::int64_t a = 0; a < outer && inner > 1; ++a) {
    for (std::int64_t c = 0; c < inner; ++c) {
      const std::int64_t base = a * n * inner + c;
      R mx = -std::numeric_limits<R>::infinity();
      for (std::int64_t k = 0; k < n; ++k) mx = std::max(mx, in[base + k * inner]);
      R total = 0;
      for (std::int64_t k = 0; k < n; ++k) {
        const R e = std::exp(in[base + k * inner] - mx);
        o[base + k * inner] = e;
        total += e;
      }
      const R inv = R(1) / total;
      for (std::int64_t k = 0; k < n; ++k) o[base + k * inner] *= inv;
    }
  }
  record<R>(out, "softmax", {&x}, [x, y_weak = weak(out), outer, inner, n](std::span<const R> g) {
    auto s = grad_sink(x);
    if (s.empty()) return;
    const auto y_storage = y_weak.lock();
    const R* y = y_storage->data.data();
    if (inner == 1) {
      for (std::int64_t a = 0; a < outer; ++a) {
        Eigen::Map<const Array> ya(y + a * n, n), ga(g.data() + a * n, n);
        Eigen::Map<Array> sa(s.data() + a * n, n);
        const R dot = (ga * ya).sum();
        sa += ya * (ga - dot);
      }
      return;
    }
    for (std::int64_t a = 0; a < outer; ++a) {
      for (std::int64_t c = 0; c < inner; ++c) {
        const std::int64_t base = a * n * inner + c;
        R dot = 0;
        for (std::int64_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::int64_t k = 0; k < n; ++k) {
          const auto i = base + k * inner;
          s[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  return out;
}

template <class R>
T<R> reshape(const T<R>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto out = T<R>::copy_of(std::move(shape), x.data());
  record<R>(out, "reshape", {&x}, [x](std::span<const R> g) {
    auto s = grad_sink(x);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// channel mixing

template <class R>
T<R> linear_channels(const T<R>& x, const T<R>& weight, const T<R>& bias) {
  const auto d = dims4(x, "linear_channels");
  require_rank(weight, 2, "linear_channels");
  const std::int64_t co = weight.dim(0);
  if (weight.dim(1) != d.c)
    throw ShapeError("linear_channels: weight " + shape_str(weight.shape()) + " does not accept input " +
                     shape_str(x.shape()));
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != co))
    throw ShapeError("linear_channels: bias shape " + shape_str(bias.shape()));
  const std::int64_t hw = d.h * d.w;
  auto out = T<R>::zeros({d.b, co, d.h, d.w});
  for (std::int64_t b = 0; b < d.b; ++b) {
    R* ob = out.ptr() + b * co * hw;
    if (bias.defined()) {
      for (std::int64_t o = 0; o < co; ++o) std::fill_n(ob + o * hw, hw, bias.data()[o]);
    }
    linalg::gemm<R>(false, false, co, hw, d.c, R(1), weight.ptr(), x.ptr() + b * d.c * hw, bias.defined() ? R(1) : R(0),
                    ob);
  }
  record<R>(out, "linear_channels", {&x, &weight, &bias}, [x, weight, bias, d, co, hw](std::span<const R> g) {
    auto gw = grad_sink(weight);
    auto gb = grad_sink(bias);
    auto gx = grad_sink(x);
    for (std::int64_t b = 0; b < d.b; ++b) {
      const R* gy = g.data() + b * co * hw;
      if (!gw.empty())
        linalg::gemm<R>(false, true, co, d.c, hw, R(1), gy, x.ptr() + b * d.c * hw, R(1), gw.data());
      if (!gx.empty()) linalg::gemm<R>(true, false, d.c, hw, co, R(1), weight.ptr(), gy, R(1), gx.data() + b * d.c * hw);
      if (!gb.empty())
        for (std::int64_t o = 0; o < co; ++o) {
          R acc = 0;
          for (std::int64_t p = 0; p < hw; ++p) acc += gy[o * hw + p];
          gb[o] += acc;
        }
    }
  });
  return out;
}

namespace {

struct ConvGeometry {
  std::int64_t batch, cin, h, w, kh, kw;
  std::int64_t rows() const { return cin * kh * kw; }
  std::int64_t cols() const { return batch * h * w; }
};

// cols[(ci*kh+dy)*kw+dx, b*H*W + y*W + x] = x[b, ci, y+dy-ph, x+dx-pw] (0 outside)
template <class R>
void im2col(const R* x, const ConvGeometry& g, R* cols) {
  const std::int64_t ph = g.kh / 2, pw = g.kw / 2, hw = g.h * g.w, ncols = g.cols();
  for (std::int64_t ci = 0; ci < g.cin; ++ci)
    for (std::int64_t dy = 0; dy < g.kh; ++dy)
      for (std::int64_t dx = 0; dx < g.kw; ++dx) {
        R* row = cols + ((ci * g.kh + dy) * g.kw + dx) * ncols;
        const std::int64_t x0 = std::max<std::int64_t>(0, pw - dx);
        const std::int64_t x1 = std::min<std::int64_t>(g.w, g.w + pw - dx);
        for (std::int64_t b = 0; b < g.batch; ++b) {
          const R* plane = x + (b * g.cin + ci) * hw;
          for (std::int64_t y = 0; y < g.h; ++y) {
            R* dst = row + b * hw + y * g.w;
            const std::int64_t sy = y + dy - ph;
            if (sy < 0 || sy >= g.h || x0 >= x1) {
              std::fill_n(dst, g.w, R(0));
              continue;
            }
            std::fill_n(dst, x0, R(0));
            std::copy_n(plane + sy * g.w + (x0 + dx - pw), x1 - x0, dst + x0);
            std::fill(dst + x1, dst + g.w, R(0));
          }
        }
      }
}

template <class R>
void col2im_add(const R* cols, const ConvGeometry& g, R* gx) {
  const std::int64_t ph = g.kh / 2, pw = g.kw / 2, hw = g.h * g.w, ncols = g.cols();
  for (std::int64_t ci = 0; ci < g.cin; ++ci)
    for (std::int64_t dy = 0; dy < g.kh; ++dy)
      for (std::int64_t dx = 0; dx < g.kw; ++dx) {
        const R* row = cols + ((ci * g.kh + dy) * g.kw + dx) * ncols;
        const std::int64_t x0 = std::max<std::int64_t>(0, pw - dx);
        const std::int64_t x1 = std::min<std::int64_t>(g.w, g.w + pw - dx);
        for (std::int64_t b = 0; b < g.batch; ++b) {
          R* plane = gx + (b * g.cin + ci) * hw;
          for (std::int64_t y = 0; y < g.h; ++y) {
            const std::int64_t sy = y + dy - ph;
            if (sy < 0 || sy >= g.h) continue;
            const R* src = row + b * hw + y * g.w;
            R* dst = plane + sy * g.w + (dx - pw);
            for (std::int64_t xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
          }
        }
      }
}

}  // namespace

template <class R>
T<R> conv2d(const T<R>& x, const T<R>& kernel, const T<R>& bias) {
  const auto d = dims4(x, "conv2d");
  require_rank(kernel, 4, "conv2d");
  const std::int64_t co = kernel.dim(0);
  if (kernel.dim(1) != d.c)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, got " + shape_str(x.shape()));
  if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0) throw ShapeError("conv2d: kernel dims must be odd");
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != co))
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));

  const ConvGeometry geo{d.b, d.c, d.h, d.w, kernel.dim(2), kernel.dim(3)};
  // One sample at a time keeps the column buffer cache-sized.
  const ConvGeometry one{1, d.c, d.h, d.w, kernel.dim(2), kernel.dim(3)};
  const std::int64_t hw = d.h * d.w, nrows = geo.rows();
  AlignedVector<R> cols(static_cast<std::size_t>(nrows * hw));
  auto out = T<R>::zeros({d.b, co, d.h, d.w});
  for (std::int64_t b = 0; b < d.b; ++b) {
    R* dst = out.ptr() + b * co * hw;
    if (bias.defined())
      for (std::int64_t o = 0; o < co; ++o) std::fill_n(dst + o * hw, hw, bias.data()[o]);
    im2col(x.ptr() + b * d.c * hw, one, cols.data());
    linalg::gemm<R>(false, false, co, hw, nrows, R(1), kernel.ptr(), cols.data(), R(1), dst);
  }

  record<R>(out, "conv2d", {&x, &kernel, &bias}, [x, kernel, bias, geo, co](std::span<const R> g) {
    const std::int64_t hw = geo.h * geo.w, ncols = geo.cols(), nrows = geo.rows();
    AlignedVector<R> gmat(static_cast<std::size_t>(co * ncols));
    for (std::int64_t b = 0; b < geo.batch; ++b)
      for (std::int64_t o = 0; o < co; ++o)
        std::copy_n(g.data() + (b * co + o) * hw, hw, gmat.data() + o * ncols + b * hw);

    if (auto gb = grad_sink(bias); !gb.empty())
      for (std::int64_t o = 0; o < co; ++o) {
        R acc = 0;
        for (std::int64_t i = 0; i < ncols; ++i) acc += gmat[o * ncols + i];
        gb[o] += acc;
      }
    auto gk = grad_sink(kernel);
    auto gx = grad_sink(x);
    if (gk.empty() && gx.empty()) return;
    AlignedVector<R> cols(static_cast<std::size_t>(nrows * ncols));
    if (!gk.empty()) {
      im2col(x.ptr(), geo, cols.data());
      linalg::gemm<R>(false, true, co, nrows, ncols, R(1), gmat.data(), cols.data(), R(1), gk.data());
    }
    if (!gx.empty()) {
      linalg::gemm<R>(true, false, nrows, ncols, co, R(1), kernel.ptr(), gmat.data(), R(0), cols.data());
      col2im_add(cols.data(), geo, gx.data());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// resampling

template <class R>
T<R> max_pool2x2(const T<R>& x) {
  const auto d = dims4(x, "max_pool2x2");
  if (d.h % 2 || d.w % 2) throw ShapeError("max_pool2x2: spatial dims must be even, got " + shape_str(x.shape()));
  const std::int64_t oh = d.h / 2, ow = d.w / 2;
  auto out = T<R>::zeros({d.b, d.c, oh, ow});
  std::vector<std::int32_t> argmax(static_cast<std::size_t>(out.numel()));
  const R* in = x.ptr();
  R* o = out.ptr();
  std::int64_t idx = 0;
  for (std::int64_t plane = 0; plane < d.b * d.c; ++plane) {
    const R* p = in + plane * d.h * d.w;
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t xx = 0; xx < ow; ++xx, ++idx) {
        std::int32_t best = static_cast<std::int32_t>((2 * y) * d.w + 2 * xx);
        for (std::int32_t c : {static_cast<std::int32_t>((2 * y) * d.w + 2 * xx + 1),
                               static_cast<std::int32_t>((2 * y + 1) * d.w + 2 * xx),
                               static_cast<std::int32_t>((2 * y + 1) * d.w + 2 * xx + 1)})
          if (p[c] > p[best]) best = c;
        argmax[static_cast<std::size_t>(idx)] = best;
        o[idx] = p[best];
      }
  }
  record<R>(out, "max_pool2x2", {&x}, [x, argmax = std::move(argmax), d, oh, ow](std::span<const R> g) {
    auto s = grad_sink(x);
    std::int64_t idx = 0;
    for (std::int64_t plane = 0; plane < d.b * d.c; ++plane)
      for (std::int64_t k = 0; k < oh * ow; ++k, ++idx)
        s[static_cast<std::size_t>(plane * d.h * d.w + argmax[static_cast<std::size_t>(idx)])] += g[idx];
  });
  return out;
}

namespace {

struct Interp {
  std::vector<std::int64_t> i0, i1;
  std::vector<double> w1;
};

Interp upsample_taps(std::int64_t n) {
  Interp t;
  for (std::int64_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, n - 1);
    t.i0.push_back(lo);
    t.i1.push_back(std::min(lo + 1, n - 1));
    t.w1.push_back(src - static_cast<double>(lo));
  }
  return t;
}

}  // namespace

template <class R>
T<R> upsample_bilinear2x(const T<R>& x) {
  const auto d = dims4(x, "upsample_bilinear2x");
  const std::int64_t oh = 2 * d.h, ow = 2 * d.w;
  auto ty = upsample_taps(d.h);
  auto tx = upsample_taps(d.w);
  auto out = T<R>::zeros({d.b, d.c, oh, ow});
  for (std::int64_t plane = 0; plane < d.b * d.c; ++plane) {
    const R* p = x.ptr() + plane * d.h * d.w;
    R* o = out.ptr() + plane * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const R wy1 = static_cast<R>(ty.w1[y]), wy0 = R(1) - wy1;
      const R* r0 = p + ty.i0[y] * d.w;
      const R* r1 = p + ty.i1[y] * d.w;
      for (std::int64_t xx = 0; xx < ow; ++xx) {
        const R wx1 = static_cast<R>(tx.w1[xx]), wx0 = R(1) - wx1;
        o[y * ow + xx] = wy0 * (wx0 * r0[tx.i0[xx]] + wx1 * r0[tx.i1[xx]]) +
                         wy1 * (wx0 * r1[tx.i0[xx]] + wx1 * r1[tx.i1[xx]]);
      }
    }
  }
  record<R>(out, "upsample_bilinear2x", {&x}, [x, d, ty, tx, oh, ow](std::span<const R> g) {
    auto s = grad_sink(x);
    for (std::int64_t plane = 0; plane < d.b * d.c; ++plane) {
      R* p = s.data() + plane * d.h * d.w;
      const R* go = g.data() + plane * oh * ow;
      for (std::int64_t y = 0; y < oh; ++y) {
        const R wy1 = static_cast<R>(ty.w1[y]), wy0 = R(1) - wy1;
        R* r0 = p + ty.i0[y] * d.w;
        R* r1 = p + ty.i1[y] * d.w;
        for (std::int64_t xx = 0; xx < ow; ++xx) {
          const R wx1 = static_cast<R>(tx.w1[xx]), wx0 = R(1) - wx1;
          const R v = go[y * ow + xx];
          r0[tx.i0[xx]] += wy0 * wx0 * v;
          r0[tx.i1[xx]] += wy0 * wx1 * v;
          r1[tx.i0[xx]] += wy1 * wx0 * v;
          r1[tx.i1[xx]] += wy1 * wx1 * v;
        }
      }
    }
  });
  return out;
}

template <class R>
T<R> concat_channels(const T<R>& a, const T<R>& b) {
  const auto da = dims4(a, "concat_channels");
  const auto db = dims4(b, "concat_channels");
  if (da.b != db.b || da.h != db.h || da.w != db.w)
    throw ShapeError("concat_channels: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t hw = da.h * da.w, c = da.c + db.c;
  auto out = T<R>::zeros({da.b, c, da.h, da.w});
  for (std::int64_t n = 0; n < da.b; ++n) {
    std::copy_n(a.ptr() + n * da.c * hw, da.c * hw, out.ptr() + n * c * hw);
    std::copy_n(b.ptr() + n * db.c * hw, db.c * hw, out.ptr() + n * c * hw + da.c * hw);
  }
  record<R>(out, "concat_channels", {&a, &b}, [a, b, da, db, hw, c](std::span<const R> g) {
    auto sa = grad_sink(a);
    auto sb = grad_sink(b);
    for (std::int64_t n = 0; n < da.b; ++n) {
      const R* gn = g.data() + n * c * hw;
      if (!sa.empty())
        for (std::int64_t i = 0; i < da.c * hw; ++i) sa[n * da.c * hw + i] += gn[i];
      if (!sb.empty())
        for (std::int64_t i = 0; i < db.c * hw; ++i) sb[n * db.c * hw + i] += gn[da.c * hw + i];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// batched matmul

template <class R>
T<R> bmm(const T<R>& a, const T<R>& b, bool transpose_a, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::int64_t batch = a.dim(0);
  if (b.dim(0) != batch) throw ShapeError("bmm: batch mismatch");
  const std::int64_t m = transpose_a ? a.dim(2) : a.dim(1);
  const std::int64_t k = transpose_a ? a.dim(1) : a.dim(2);
  const std::int64_t kb = transpose_b ? b.dim(2) : b.dim(1);
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (k != kb)
    throw ShapeError("bmm: inner dims differ for " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto out = T<R>::zeros({batch, m, n});
  const std::int64_t sa = a.dim(1) * a.dim(2), sb = b.dim(1) * b.dim(2);
  for (std::int64_t i = 0; i < batch; ++i)
    linalg::gemm<R>(transpose_a, transpose_b, m, n, k, R(1), a.ptr() + i * sa, b.ptr() + i * sb, R(0),
                    out.ptr() + i * m * n);
  record<R>(out, "bmm", {&a, &b}, [a, b, transpose_a, transpose_b, batch, m, n, k, sa, sb](std::span<const R> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    for (std::int64_t i = 0; i < batch; ++i) {
      const R* gi = g.data() + i * m * n;
      const R* ai = a.ptr() + i * sa;
      const R* bi = b.ptr() + i * sb;
      // C = op(A) op(B); dop(A) = G op(B)^T, dop(B) = op(A)^T G.
      if (!ga.empty()) {
        if (!transpose_a)
          linalg::gemm<R>(false, !transpose_b, m, k, n, R(1), gi, bi, R(1), ga.data() + i * sa);
        else
          linalg::gemm<R>(transpose_b, true, k, m, n, R(1), bi, gi, R(1), ga.data() + i * sa);
      }
      if (!gb.empty()) {
        if (!transpose_b)
          linalg::gemm<R>(!transpose_a, false, k, n, m, R(1), ai, gi, R(1), gb.data() + i * sb);
        else
          linalg::gemm<R>(true, transpose_a, n, k, m, R(1), gi, ai, R(1), gb.data() + i * sb);
      }
    }
  });
  return out;
}

template <class R>
T<R> mse_loss(const T<R>& pred, const T<R>& truth) {
  require_same_shape(pred, truth, "mse_loss");
  const auto n = static_cast<R>(pred.numel());
  R acc = 0;
  auto p = pred.data();
  auto t = truth.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const R d = p[i] - t[i];
    acc += d * d;
  }
  auto out = T<R>::scalar(acc / n);
  record<R>(out, "mse_loss", {&pred, &truth}, [pred, truth, n](std::span<const R> g) {
    auto p = pred.data();
    auto t = truth.data();
    const R k = R(2) * g[0] / n;
    auto sp = grad_sink(pred);
    for (std::size_t i = 0; i < sp.size(); ++i) sp[i] += k * (p[i] - t[i]);
    auto st = grad_sink(truth);
    for (std::size_t i = 0; i < st.size(); ++i) st[i] -= k * (p[i] - t[i]);
  });
  return out;
}

#define SAUFNO_INSTANTIATE_OPS(R)                                                      \
  template T<R> add(const T<R>&, const T<R>&);                                         \
  template T<R> sub(const T<R>&, const T<R>&);                                         \
  template T<R> mul(const T<R>&, const T<R>&);                                         \
  template T<R> scale(const T<R>&, R);                                                 \
  template T<R> sum(const T<R>&);                                                      \
  template T<R> mean(const T<R>&);                                                     \
  template T<R> gelu(const T<R>&);                                                     \
  template T<R> relu(const T<R>&);                                                     \
  template T<R> softmax(const T<R>&, int);                                             \
  template T<R> reshape(const T<R>&, Shape);                                           \
  template T<R> linear_channels(const T<R>&, const T<R>&, const T<R>&);                \
  template T<R> conv2d(const T<R>&, const T<R>&, const T<R>&);                         \
  template T<R> max_pool2x2(const T<R>&);                                              \
  template T<R> upsample_bilinear2x(const T<R>&);                                      \
  template T<R> concat_channels(const T<R>&, const T<R>&);                             \
  template T<R> bmm(const T<R>&, const T<R>&, bool, bool);                             \
  template T<R> mse_loss(const T<R>&, const T<R>&);

SAUFNO_INSTANTIATE_OPS(float)
SAUFNO_INSTANTIATE_OPS(double)

#undef SAUFNO_INSTANTIATE_OPS

}  // namespace saufno::ops
