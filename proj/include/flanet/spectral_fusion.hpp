#pragma once

#include <complex>
#include <string>

#include "flanet/layers.hpp"

namespace flanet {

template <typename T>
using ComplexTensor = Tensor<std::complex<T>>;

// ---------------------------------------------------------------------------
// Spectral views of feature maps. A spatial feature is c x h x w (or
// n x c x h x w); the transform runs over the trailing h, w axes per channel.

/// Unnormalized forward 2D DFT.
template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& spatial);

/// Inverse 2D DFT scaled by 1/(h*w), so ifft2(fft2(x)) == x.
template <typename T>
ComplexTensor<T> ifft2(const ComplexTensor<T>& spectral);

/// Real parts into channels [0, c), imaginary parts into [c, 2c).
template <typename T>
Tensor<T> complex_to_channels(const ComplexTensor<T>& spectral);

/// Inverse of complex_to_channels. Throws ShapeError on an odd channel count.
template <typename T>
ComplexTensor<T> channels_to_complex(const Tensor<T>& packed);

// ---------------------------------------------------------------------------

/// Which packed spectrum the attention map of each frame pair multiplies.
enum class GateTarget { kCore, kAuxiliary };

struct FfaOptions {
  int norm_groups = 8;
  GateTarget gate = GateTarget::kCore;
};

/// CA(.): concat(core, aux) [4c] -> group norm -> 1x1 conv [2c] -> ReLU
///        -> 1x1 conv [2c] -> sigmoid.
template <typename T>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParamStore<T>& store, const std::string& name, int64_t spatial_channels,
                   int norm_groups, Rng& rng);

  Var<T> operator()(const Var<T>& core, const Var<T>& aux) const;

 private:
  GroupNorm<T> norm_;
  Conv2d<T> squeeze_, expand_;
};

/// Intermediate values of one FFA evaluation, exposed for inspection.
template <typename T>
struct FfaTrace {
  Var<T> x_core, x_prev1, x_prev2;  // packed spectra, 2c channels
  Var<T> attention1, attention2;
  Var<T> gated1, gated2;            // y1, y2
  Var<T> z1, z2;                    // spatial, c channels
  Var<T> pre_activation;            // group-normed BConv output before ReLU
  Var<T> output;                    // o_t
};

/// Frequency-based feature aggregation of a frame and its two predecessors.
template <typename T>
class FfaBlock {
 public:
  FfaBlock() = default;
  FfaBlock(ParamStore<T>& store, const std::string& name, int64_t channels, Rng& rng,
           FfaOptions options = {});

  Var<T> operator()(const Var<T>& current, const Var<T>& prev1, const Var<T>& prev2) const {
    return trace(current, prev1, prev2).output;
  }

  FfaTrace<T> trace(const Var<T>& current, const Var<T>& prev1, const Var<T>& prev2) const;

  /// BConv applied to an already summed spatial feature.
  Var<T> fuse(const Var<T>& summed) const { return fuse_(summed); }

 private:
  ChannelAttention<T> attend_prev1_, attend_prev2_;
  BConv<T> fuse_;
  FfaOptions options_;
  int64_t channels_ = 0;
};

extern template class ChannelAttention<float>;
extern template class ChannelAttention<double>;
extern template class FfaBlock<float>;
extern template class FfaBlock<double>;

}  // namespace flanet
