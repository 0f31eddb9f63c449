#include "flanet/spectral_fusion.hpp"

#include "flanet/fft.hpp"

namespace flanet {
namespace {

struct PlaneLayout {
  int64_t planes, h, w;
};

PlaneLayout plane_layout(const Shape& shape, const char* what) {
  if (shape.size() < 2) throw ShapeError(std::string(what) + ": need at least 2 axes");
  const int64_t h = shape[shape.size() - 2];
  const int64_t w = shape[shape.size() - 1];
  return {shape_numel(shape) / std::max<int64_t>(h * w, 1), h, w};
}

// Leading batch count and channel count for a c x h x w or n x c x h x w shape.
std::pair<int64_t, int64_t> batch_channels(const Shape& shape, const char* what) {
  if (shape.size() == 3) return {1, shape[0]};
  if (shape.size() == 4) return {shape[0], shape[1]};
  throw ShapeError(std::string(what) + ": expected c x h x w or n x c x h x w, got " +
                   shape_str(shape));
}

}  // namespace

template <typename T>
ComplexTensor<T> fft2(const Tensor<T>& spatial) {
  const PlaneLayout p = plane_layout(spatial.shape(), "fft2");
  ComplexTensor<T> out(spatial.shape());
  for (int64_t i = 0; i < spatial.numel(); ++i) out[i] = spatial[i];
  fft::transform2d(out.data(), p.planes, p.h, p.w, fft::Direction::kForward);
  return out;
}

template <typename T>
ComplexTensor<T> ifft2(const ComplexTensor<T>& spectral) {
  const PlaneLayout p = plane_layout(spectral.shape(), "ifft2");
  ComplexTensor<T> out = spectral;
  fft::transform2d(out.data(), p.planes, p.h, p.w, fft::Direction::kInverse);
  const T norm = T(1) / static_cast<T>(p.h * p.w);
  for (auto& v : out.values()) v *= norm;
  return out;
}

template <typename T>
Tensor<T> complex_to_channels(const ComplexTensor<T>& spectral) {
  const auto [n, c] = batch_channels(spectral.shape(), "complex_to_channels");
  Shape shape = spectral.shape();
  shape[shape.size() - 3] = 2 * c;
  const int64_t plane = shape[shape.size() - 2] * shape[shape.size() - 1];
  Tensor<T> out(shape);
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t k = 0; k < c; ++k) {
      const std::complex<T>* src = spectral.data() + (b * c + k) * plane;
      T* re = out.data() + (b * 2 * c + k) * plane;
      T* im = out.data() + (b * 2 * c + c + k) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        re[i] = src[i].real();
        im[i] = src[i].imag();
      }
    }
  }
  return out;
}

template <typename T>
ComplexTensor<T> channels_to_complex(const Tensor<T>& packed) {
  const auto [n, c2] = batch_channels(packed.shape(), "channels_to_complex");
  if (c2 % 2 != 0) {
    throw ShapeError("channels_to_complex: odd channel count " + std::to_string(c2));
  }
  const int64_t c = c2 / 2;
  Shape shape = packed.shape();
  shape[shape.size() - 3] = c;
  const int64_t plane = shape[shape.size() - 2] * shape[shape.size() - 1];
  ComplexTensor<T> out(shape);
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t k = 0; k < c; ++k) {
      const T* re = packed.data() + (b * c2 + k) * plane;
      const T* im = packed.data() + (b * c2 + c + k) * plane;
      std::complex<T>* dst = out.data() + (b * c + k) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = {re[i], im[i]};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
ChannelAttention<T>::ChannelAttention(ParamStore<T>& store, const std::string& name,
                                      int64_t spatial_channels, int norm_groups, Rng& rng)
    : norm_(store, name + ".norm", 4 * spatial_channels,
            norm_groups_for(4 * spatial_channels, norm_groups)),
      squeeze_(store, name + ".fc1", 4 * spatial_channels, 2 * spatial_channels, 1, 1, rng),
      expand_(store, name + ".fc2", 2 * spatial_channels, 2 * spatial_channels, 1, 1, rng) {}

template <typename T>
Var<T> ChannelAttention<T>::operator()(const Var<T>& core, const Var<T>& aux) const {
  require_same_shape(core.shape(), aux.shape(), "channel_attention");
  const Var<T> pair = ops::concat_channels<T>({core, aux});
  return ops::sigmoid(expand_(ops::relu(squeeze_(norm_(pair)))));
}

template <typename T>
FfaBlock<T>::FfaBlock(ParamStore<T>& store, const std::string& name, int64_t channels, Rng& rng,
                      FfaOptions options)
    : attend_prev1_(store, name + ".ca1", channels, options.norm_groups, rng),
      attend_prev2_(store, name + ".ca2", channels, options.norm_groups, rng),
      fuse_(store, name + ".fuse", channels, channels, options.norm_groups, rng),
      options_(options),
      channels_(channels) {}

template <typename T>
FfaTrace<T> FfaBlock<T>::trace(const Var<T>& current, const Var<T>& prev1,
                               const Var<T>& prev2) const {
  require_rank(current.shape(), 4, "ffa_forward");
  require_same_shape(current.shape(), prev1.shape(), "ffa_forward f_t vs f_{t-1}");
  require_same_shape(current.shape(), prev2.shape(), "ffa_forward f_t vs f_{t-2}");
  if (current.shape()[1] != channels_) {
    throw ShapeError("ffa_forward: block built for " + std::to_string(channels_) +
                     " channels, got " + shape_str(current.shape()));
  }

  FfaTrace<T> t;
  t.x_core = ops::fft2_packed(current);
  t.x_prev1 = ops::fft2_packed(prev1);
  t.x_prev2 = ops::fft2_packed(prev2);

  t.attention1 = attend_prev1_(t.x_core, t.x_prev1);
  t.attention2 = attend_prev2_(t.x_core, t.x_prev2);
  const bool core = options_.gate == GateTarget::kCore;
  t.gated1 = ops::mul(t.attention1, core ? t.x_core : t.x_prev1);
  t.gated2 = ops::mul(t.attention2, core ? t.x_core : t.x_prev2);

  t.z1 = ops::ifft2_real(t.gated1);
  t.z2 = ops::ifft2_real(t.gated2);
  const Var<T> summed = ops::add(t.z1, t.z2);
  t.pre_activation = fuse_.pre_activation(summed);
  t.output = ops::relu(t.pre_activation);
  return t;
}

#define FLANET_INSTANTIATE(T)                                           \
  template ComplexTensor<T> fft2(const Tensor<T>&);                     \
  template ComplexTensor<T> ifft2(const ComplexTensor<T>&);             \
  template Tensor<T> complex_to_channels(const ComplexTensor<T>&);      \
  template ComplexTensor<T> channels_to_complex(const Tensor<T>&);      \
  template class ChannelAttention<T>;                                   \
  template class FfaBlock<T>;

FLANET_INSTANTIATE(float)
FLANET_INSTANTIATE(double)

#undef FLANET_INSTANTIATE

}  // namespace flanet
