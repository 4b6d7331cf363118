#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "saufno/tensor/tensor.hpp"

namespace saufno::fft {

using cd = std::complex<double>;

// Plain complex products. The std::complex operator carries C99 Annex G
// inf/nan recovery, which is several times slower in inner loops.
template <class T>
inline std::complex<T> mul(std::complex<T> a, std::complex<T> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}
// conj(a) * b
template <class T>
inline std::complex<T> mul_conj(std::complex<T> a, std::complex<T> b) {
  return {a.real() * b.real() + a.imag() * b.imag(), a.real() * b.imag() - a.imag() * b.real()};
}

// Complex DFT of one length. Powers of two use an iterative radix-2 kernel;
// other lengths go through Bluestein's chirp-z convolution.
class Plan {
 public:
  explicit Plan(std::size_t n);

  std::size_t size() const { return n_; }
  // Unnormalized forward (e^{-i...}) transform, in place.
  void forward(std::span<cd> data) const;
  // Unnormalized inverse (e^{+i...}) transform, in place.
  void inverse(std::span<cd> data) const;

 private:
  void radix2(std::span<cd> data, bool inverse) const;
  void bluestein(std::span<cd> data) const;

  std::size_t n_;
  bool pow2_;
  std::vector<std::uint32_t> bitrev_;
  std::vector<cd> twiddle_;  // e^{-2 pi i k / n}, k < n/2
  // Bluestein state
  std::vector<cd> chirp_;
  std::vector<cd> chirp_spectrum_;
  std::shared_ptr<const Plan> inner_;
};

// Shared, thread-safe plan cache.
std::shared_ptr<const Plan> plan_for(std::size_t n);

// Unnormalized 2D real-to-half-complex transform of one H x W plane into
// H x (W/2+1) coefficients. With `columns` set, only the first `columns`
// coefficient columns are computed; the rest of `out` is left untouched.
template <class R>
void rfft2_plane(const R* x, std::int64_t h, std::int64_t w, std::complex<R>* out, std::int64_t columns = -1);

// Inverse of rfft2_plane including the 1/(H*W) factor. Computes
// (1/HW) Re sum_{k1, k2<=W/2} c_{k2} X[k1,k2] e^{+i theta}, with c = 1 on the DC
// (and, for even W, Nyquist) column and 2 elsewhere. Imaginary parts that a
// Hermitian signal would not carry are dropped. With `columns` set, columns
// at or beyond it are taken as zero and not read.
template <class R>
void irfft2_plane(const std::complex<R>* in, std::int64_t h, std::int64_t w, R* out, std::int64_t columns = -1);

// Transforms over the last two axes of x[..., H, W] -> [..., H, W/2+1].
template <class R>
BasicComplexTensor<R> rfft2(const BasicTensor<R>& x);

// Inverse over the last two axes. `width` is the original W; it may be omitted
// only when W was even (W = 2 * (Wf - 1)).
template <class R>
BasicTensor<R> irfft2(const BasicComplexTensor<R>& spectrum, std::optional<std::int64_t> width = std::nullopt);

}  // namespace saufno::fft
