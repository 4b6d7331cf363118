#include "saufno/tensor/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace saufno::fft {

Plan::Plan(std::size_t n) : n_(n), pow2_(std::has_single_bit(n)) {
  if (n == 0) throw ShapeError("fft: zero-length transform");
  if (pow2_) {
    const int bits = std::countr_zero(n);
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t r = 0;
      for (int b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= 1u << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    return;
  }
  const std::size_t m = std::bit_ceil(2 * n - 1);
  inner_ = plan_for(m);
  chirp_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small and exact.
    const std::size_t k2 = (k * k) % (2 * n);
    chirp_[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  chirp_spectrum_.assign(m, cd(0));
  chirp_spectrum_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) chirp_spectrum_[k] = chirp_spectrum_[m - k] = std::conj(chirp_[k]);
  inner_->forward(chirp_spectrum_);
}

void Plan::forward(std::span<cd> data) const {
  if (pow2_) {
    radix2(data, false);
  } else {
    bluestein(data);
  }
}

void Plan::inverse(std::span<cd> data) const {
  if (pow2_) {
    radix2(data, true);
    return;
  }
  for (auto& v : data) v = std::conj(v);
  bluestein(data);
  for (auto& v : data) v = std::conj(v);
}

void Plan::radix2(std::span<cd> a, bool inverse) const {
  const std::size_t n = n_;
  for (std::size_t i = 0; i < n; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2, step = n / len;
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t j = 0; j < half; ++j) {
        cd w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const cd u = a[i + j];
        const cd v = mul(a[i + j + half], w);
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
  }
}

void Plan::bluestein(std::span<cd> data) const {
  const std::size_t m = inner_->size();
  std::vector<cd> buf(m, cd(0));
  for (std::size_t k = 0; k < n_; ++k) buf[k] = mul(data[k], chirp_[k]);
  inner_->forward(buf);
  for (std::size_t k = 0; k < m; ++k) buf[k] = mul(buf[k], chirp_spectrum_[k]);
  inner_->inverse(buf);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n_; ++k) data[k] = mul(buf[k], chirp_[k]) * inv_m;
}

std::shared_ptr<const Plan> plan_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const Plan>> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  // Built outside the lock: Bluestein plans request their inner plan.
  auto plan = std::make_shared<const Plan>(n);
  std::lock_guard lock(mutex);
  return cache.emplace(n, std::move(plan)).first->second;
}

template <class R>
void rfft2_plane(const R* x, std::int64_t h, std::int64_t w, std::complex<R>* out, std::int64_t columns) {
  const std::int64_t wf = w / 2 + 1;
  const std::int64_t kept = columns < 0 ? wf : std::min(columns, wf);
  const auto row_plan = plan_for(static_cast<std::size_t>(w));
  const auto col_plan = plan_for(static_cast<std::size_t>(h));
  std::vector<cd> half(static_cast<std::size_t>(h * wf));
  std::vector<cd> row(static_cast<std::size_t>(w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t i = 0; i < w; ++i) row[i] = cd(static_cast<double>(x[y * w + i]), 0.0);
    row_plan->forward(row);
    for (std::int64_t k = 0; k < wf; ++k) half[y * wf + k] = row[k];
  }
  std::vector<cd> col(static_cast<std::size_t>(h));
  for (std::int64_t k = 0; k < kept; ++k) {
    for (std::int64_t y = 0; y < h; ++y) col[y] = half[y * wf + k];
    col_plan->forward(col);
    for (std::int64_t y = 0; y < h; ++y) out[y * wf + k] = std::complex<R>(col[y]);
  }
}

template <class R>
void irfft2_plane(const std::complex<R>* in, std::int64_t h, std::int64_t w, R* out, std::int64_t columns) {
  const std::int64_t wf = w / 2 + 1;
  const std::int64_t kept = columns < 0 ? wf : std::min(columns, wf);
  const auto row_plan = plan_for(static_cast<std::size_t>(w));
  const auto col_plan = plan_for(static_cast<std::size_t>(h));
  std::vector<cd> half(static_cast<std::size_t>(h * wf), cd(0));
  std::vector<cd> col(static_cast<std::size_t>(h));
  for (std::int64_t k = 0; k < kept; ++k) {
    for (std::int64_t y = 0; y < h; ++y) col[y] = cd(in[y * wf + k]);
    col_plan->inverse(col);
    for (std::int64_t y = 0; y < h; ++y) half[y * wf + k] = col[y];
  }
  const double scale = 1.0 / static_cast<double>(h * w);
  std::vector<cd> row(static_cast<std::size_t>(w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t k = 0; k < wf; ++k) row[k] = half[y * wf + k];
    for (std::int64_t k = wf; k < w; ++k) row[k] = std::conj(half[y * wf + (w - k)]);
    row_plan->inverse(row);
    for (std::int64_t i = 0; i < w; ++i) out[y * w + i] = static_cast<R>(row[i].real() * scale);
  }
}

template <class R>
BasicComplexTensor<R> rfft2(const BasicTensor<R>& x) {
  if (x.ndim() < 2) throw ShapeError("rfft2: need at least 2 dims, got " + shape_str(x.shape()));
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  if (h < 2 || w < 2) throw ShapeError("rfft2: H and W must be >= 2, got " + shape_str(x.shape()));
  Shape s = x.shape();
  s.back() = w / 2 + 1;
  BasicComplexTensor<R> out(s);
  const std::int64_t planes = x.numel() / (h * w);
  for (std::int64_t p = 0; p < planes; ++p) rfft2_plane(x.ptr() + p * h * w, h, w, out.data.data() + p * h * (w / 2 + 1));
  return out;
}

template <class R>
BasicTensor<R> irfft2(const BasicComplexTensor<R>& spectrum, std::optional<std::int64_t> width) {
  if (spectrum.shape.size() < 2) throw ShapeError("irfft2: need at least 2 dims");
  const std::int64_t h = spectrum.shape[spectrum.shape.size() - 2];
  const std::int64_t wf = spectrum.shape.back();
  const std::int64_t w = width.value_or(2 * (wf - 1));
  if (w / 2 + 1 != wf)
    throw ShapeError("irfft2: width " + std::to_string(w) + " inconsistent with " + std::to_string(wf) +
                     " half-spectrum columns");
  if (h < 2 || w < 2) throw ShapeError("irfft2: H and W must be >= 2");
  Shape s = spectrum.shape;
  s.back() = w;
  auto out = BasicTensor<R>::zeros(s);
  const std::int64_t planes = out.numel() / (h * w);
  for (std::int64_t p = 0; p < planes; ++p) irfft2_plane(spectrum.data.data() + p * h * wf, h, w, out.ptr() + p * h * w);
  return out;
}

template void rfft2_plane(const float*, std::int64_t, std::int64_t, std::complex<float>*, std::int64_t);
template void rfft2_plane(const double*, std::int64_t, std::int64_t, std::complex<double>*, std::int64_t);
template void irfft2_plane(const std::complex<float>*, std::int64_t, std::int64_t, float*, std::int64_t);
template void irfft2_plane(const std::complex<double>*, std::int64_t, std::int64_t, double*, std::int64_t);
template BasicComplexTensor<float> rfft2(const BasicTensor<float>&);
template BasicComplexTensor<double> rfft2(const BasicTensor<double>&);
template BasicTensor<float> irfft2(const BasicComplexTensor<float>&, std::optional<std::int64_t>);
template BasicTensor<double> irfft2(const BasicComplexTensor<double>&, std::optional<std::int64_t>);

}  // namespace saufno::fft
