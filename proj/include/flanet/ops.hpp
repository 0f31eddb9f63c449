#pragma once

#include <cstdint>
#include <vector>

#include "flanet/autograd.hpp"

// Differentiable operators. Image-like tensors are N x C x H x W.
namespace flanet::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);
template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_channels(const Var<T>& a, int64_t begin, int64_t count);
/// Batch element `index` of a rank-4 tensor, kept as a 1 x C x H x W tensor.
template <typename T> Var<T> select_batch(const Var<T>& a, int64_t index);

/// 2D cross-correlation. `bias` may be undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups,
                  T eps = T(1e-5));

/// Bilinear resampling with half-pixel centers (align_corners = false).
template <typename T> Var<T> resize_bilinear(const Var<T>& x, int64_t out_h, int64_t out_w);
template <typename T> Var<T> upsample2x(const Var<T>& x);

/// Per-channel unnormalized 2D DFT of a real map; output packs real parts in
/// channels [0, C) and imaginary parts in [C, 2C).
template <typename T> Var<T> fft2_packed(const Var<T>& x);
/// Real part of the normalized inverse 2D DFT of a channel-packed spectrum.
template <typename T> Var<T> ifft2_real(const Var<T>& packed);

/// Mean squared error over all elements.
template <typename T> Var<T> mse(const Var<T>& a, const Var<T>& b);
/// Mean binary cross-entropy of sigmoid(logits) against a {0,1} target.
template <typename T> Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& target);
/// Batch mean of 1 - (sum(S*G) + eps) / (sum(S) + sum(G) - sum(S*G) + eps).
template <typename T>
Var<T> soft_iou(const Var<T>& prob, const Tensor<T>& target, T eps = T(1e-6));

}  // namespace flanet::ops
