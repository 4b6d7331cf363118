#pragma once

#include "saufno/tensor/autograd.hpp"
#include "saufno/tensor/tensor.hpp"

// Differentiable tensor operations. Every op records a tape node when any of
// its inputs requires grad. Shapes must match exactly; there is no implicit
// broadcasting.
namespace saufno::ops {

template <class R>
using T = BasicTensor<R>;

template <class R> T<R> add(const T<R>& a, const T<R>& b);
template <class R> T<R> sub(const T<R>& a, const T<R>& b);
template <class R> T<R> mul(const T<R>& a, const T<R>& b);
template <class R> T<R> scale(const T<R>& a, R factor);

// Sum of all elements, returned as shape [1].
template <class R> T<R> sum(const T<R>& a);
template <class R> T<R> mean(const T<R>& a);

// Exact GELU: x * Phi(x) with Phi the standard normal CDF.
template <class R> T<R> gelu(const T<R>& x);
template <class R> T<R> relu(const T<R>& x);

// Numerically stable softmax along `axis` (negative axes count from the end).
template <class R> T<R> softmax(const T<R>& x, int axis);

template <class R> T<R> reshape(const T<R>& x, Shape shape);

// x[B,Ci,H,W], weight[Co,Ci], bias[Co] (optional) -> [B,Co,H,W].
// A 1x1 convolution, i.e. a pointwise linear map over channels.
template <class R> T<R> linear_channels(const T<R>& x, const T<R>& weight, const T<R>& bias);

// Stride-1 cross-correlation with zero "same" padding.
// x[B,Ci,H,W], kernel[Co,Ci,kh,kw] with odd kh, kw; bias[Co] optional.
template <class R> T<R> conv2d(const T<R>& x, const T<R>& kernel, const T<R>& bias);

// 2x2 max pooling with stride 2; H and W must be even.
template <class R> T<R> max_pool2x2(const T<R>& x);

// Bilinear 2x upsampling with half-pixel centres (edge-clamped).
template <class R> T<R> upsample_bilinear2x(const T<R>& x);

// Concatenate along axis 1 of two [B,C,H,W] tensors.
template <class R> T<R> concat_channels(const T<R>& a, const T<R>& b);

// Batched matrix product over the leading axis: op(a)[B,M,K] * op(b)[B,K,N].
template <class R> T<R> bmm(const T<R>& a, const T<R>& b, bool transpose_a, bool transpose_b);

// (1/N) * sum((pred - truth)^2) over all elements.
template <class R> T<R> mse_loss(const T<R>& pred, const T<R>& truth);

}  // namespace saufno::ops
