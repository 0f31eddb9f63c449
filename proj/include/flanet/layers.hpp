#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "flanet/autograd.hpp"
#include "flanet/ops.hpp"

namespace flanet {

/// Named, ordered collection of trainable parameters. Names are dotted module
/// paths such as "decoder.seg.0.conv.weight".
template <typename T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Var<T>::parameter(std::move(init))});
    return entries_.back().var;
  }

  struct Entry {
    std::string name;
    Var<T> var;
  };

  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Var<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].var;
  }
  Var<T>& at(const std::string& name) {
    return const_cast<Var<T>&>(static_cast<const ParamStore&>(*this).at(name));
  }

  int64_t count() const {
    int64_t total = 0;
    for (const auto& e : entries_) total += e.var.value().numel();
    return total;
  }

  /// Number of scalars in parameters whose name starts with `prefix`.
  int64_t count(const std::string& prefix) const {
    int64_t total = 0;
    for (const auto& e : entries_) {
      if (e.name.rfind(prefix, 0) == 0) total += e.var.value().numel();
    }
    return total;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
};

using Rng = std::mt19937_64;

/// Largest divisor of `channels` not exceeding `preferred`.
inline int norm_groups_for(int64_t channels, int preferred) {
  for (int g = std::max(1, preferred); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int64_t in_ch, int64_t out_ch, int kernel,
         int stride, Rng& rng, bool bias = true);

  Var<T> operator()(const Var<T>& x) const {
    return ops::conv2d(x, weight_, bias_, stride_, kernel_ / 2);
  }

  const Var<T>& weight() const { return weight_; }

 private:
  Var<T> weight_, bias_;
  int kernel_ = 1, stride_ = 1;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParamStore<T>& store, const std::string& name, int64_t channels, int groups);

  Var<T> operator()(const Var<T>& x) const { return ops::group_norm(x, gamma_, beta_, groups_); }
  int groups() const { return groups_; }

 private:
  Var<T> gamma_, beta_;
  int groups_ = 1;
};

/// 3x3 convolution, group normalization, ReLU.
template <typename T>
class BConv {
 public:
  BConv() = default;
  BConv(ParamStore<T>& store, const std::string& name, int64_t in_ch, int64_t out_ch,
        int norm_groups, Rng& rng, int stride = 1);

  Var<T> operator()(const Var<T>& x) const { return ops::relu(pre_activation(x)); }
  Var<T> pre_activation(const Var<T>& x) const { return norm_(conv_(x)); }

 private:
  Conv2d<T> conv_;
  GroupNorm<T> norm_;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class GroupNorm<float>;
extern template class GroupNorm<double>;
extern template class BConv<float>;
extern template class BConv<double>;

}  // namespace flanet
