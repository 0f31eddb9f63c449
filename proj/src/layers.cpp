#include "flanet/layers.hpp"

#include <cmath>

namespace flanet {

template <typename T>
Conv2d<T>::Conv2d(ParamStore<T>& store, const std::string& name, int64_t in_ch, int64_t out_ch,
                  int kernel, int stride, Rng& rng, bool bias)
    : kernel_(kernel), stride_(stride) {
  if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || kernel % 2 == 0) {
    throw ConfigError("invalid convolution geometry for " + name);
  }
  // He-uniform: keeps activation variance roughly constant through ReLU stacks.
  const double fan_in = static_cast<double>(in_ch * kernel * kernel);
  const double bound = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> w({out_ch, in_ch, kernel, kernel});
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
  weight_ = store.add(name + ".weight", std::move(w));
  if (bias) bias_ = store.add(name + ".bias", Tensor<T>({out_ch}));
}

template <typename T>
GroupNorm<T>::GroupNorm(ParamStore<T>& store, const std::string& name, int64_t channels,
                        int groups)
    : groups_(groups) {
  if (groups <= 0 || channels % groups != 0) {
    throw ConfigError(name + ": " + std::to_string(channels) + " channels, " +
                      std::to_string(groups) + " groups");
  }
  gamma_ = store.add(name + ".weight", Tensor<T>({channels}, T(1)));
  beta_ = store.add(name + ".bias", Tensor<T>({channels}));
}

template <typename T>
BConv<T>::BConv(ParamStore<T>& store, const std::string& name, int64_t in_ch, int64_t out_ch,
                int norm_groups, Rng& rng, int stride)
    : conv_(store, name + ".conv", in_ch, out_ch, 3, stride, rng),
      norm_(store, name + ".norm", out_ch, norm_groups_for(out_ch, norm_groups)) {}

template class Conv2d<float>;
template class Conv2d<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template class BConv<float>;
template class BConv<double>;

}  // namespace flanet
