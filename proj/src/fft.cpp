#include "flanet/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace flanet::fft {
namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (h, w, direction) and never freed.
template <typename T>
struct Backend;

template <>
struct Backend<double> {
  using Plan = fftw_plan;
  using Complex = fftw_complex;
  static Plan make(int h, int w, int sign) {
    auto* buf = static_cast<Complex*>(fftw_malloc(sizeof(Complex) * h * w));
    Plan p = fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    return p;
  }
  static void run(Plan p, std::complex<double>* data) {
    auto* d = reinterpret_cast<Complex*>(data);
    fftw_execute_dft(p, d, d);
  }
};

template <>
struct Backend<float> {
  using Plan = fftwf_plan;
  using Complex = fftwf_complex;
  static Plan make(int h, int w, int sign) {
    auto* buf = static_cast<Complex*>(fftwf_malloc(sizeof(Complex) * h * w));
    Plan p = fftwf_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftwf_free(buf);
    return p;
  }
  static void run(Plan p, std::complex<float>* data) {
    auto* d = reinterpret_cast<Complex*>(data);
    fftwf_execute_dft(p, d, d);
  }
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <typename T>
typename Backend<T>::Plan plan_for(int64_t h, int64_t w, Direction dir) {
  static std::map<std::tuple<int64_t, int64_t, int>, typename Backend<T>::Plan> cache;
  const int sign = dir == Direction::kForward ? FFTW_FORWARD : FFTW_BACKWARD;
  std::lock_guard lock(planner_mutex());
  auto key = std::make_tuple(h, w, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto plan = Backend<T>::make(static_cast<int>(h), static_cast<int>(w), sign);
  if (!plan) throw std::runtime_error("FFTW failed to create a plan");
  cache.emplace(key, plan);
  return plan;
}

}  // namespace

template <typename T>
void transform2d(std::complex<T>* data, int64_t count, int64_t h, int64_t w, Direction dir) {
  if (count <= 0 || h <= 0 || w <= 0) return;
  auto plan = plan_for<T>(h, w, dir);
  for (int64_t i = 0; i < count; ++i) Backend<T>::run(plan, data + i * h * w);
}

template void transform2d<float>(std::complex<float>*, int64_t, int64_t, int64_t, Direction);
template void transform2d<double>(std::complex<double>*, int64_t, int64_t, int64_t, Direction);

}  // namespace flanet::fft
