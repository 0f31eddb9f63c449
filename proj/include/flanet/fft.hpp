#pragma once

#include <complex>
#include <cstdint>

namespace flanet::fft {

enum class Direction { kForward, kInverse };

/// In-place 2D DFT of `count` contiguous row-major h x w planes.
/// Both directions are unnormalized: forward uses exp(-i...), inverse exp(+i...).
template <typename T>
void transform2d(std::complex<T>* data, int64_t count, int64_t h, int64_t w, Direction dir);

extern template void transform2d<float>(std::complex<float>*, int64_t, int64_t, int64_t, Direction);
extern template void transform2d<double>(std::complex<double>*, int64_t, int64_t, int64_t,
                                         Direction);

}  // namespace flanet::fft
