#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flanet/layers.hpp"

namespace flanet {

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

/// Adam with bias correction over every parameter of a store.
template <typename T>
class Adam {
 public:
  Adam(ParamStore<T>& params, AdamOptions options) : params_(&params), options_(options) {
    for (const auto& e : params.entries()) {
      state_.first_moment.emplace_back(e.var.shape());
      state_.second_moment.emplace_back(e.var.shape());
    }
  }

  void step() {
    ++state_.step;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(state_.step));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(state_.step));
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T lr = static_cast<T>(options_.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(options_.eps);
    auto& entries = params_->entries();
    for (size_t k = 0; k < entries.size(); ++k) {
      Var<T> p = entries[k].var;
      const Tensor<T>& g = p.grad();
      if (g.empty()) continue;
      Tensor<T>& m = state_.first_moment[k];
      Tensor<T>& v = state_.second_moment[k];
      Tensor<T>& w = p.mutable_value();
      for (int64_t i = 0; i < w.numel(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        w[i] -= lr * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
    }
  }

  const AdamState<T>& state() const { return state_; }

  void load_state(AdamState<T> state) {
    if (state.first_moment.size() != state_.first_moment.size() ||
        state.second_moment.size() != state_.second_moment.size()) {
      throw ShapeError("optimizer state does not match the parameter list");
    }
    for (size_t k = 0; k < state.first_moment.size(); ++k) {
      require_same_shape(state.first_moment[k].shape(), state_.first_moment[k].shape(),
                         "adam first moment");
      require_same_shape(state.second_moment[k].shape(), state_.second_moment[k].shape(),
                         "adam second moment");
    }
    state_ = std::move(state);
  }

 private:
  ParamStore<T>* params_;
  AdamOptions options_;
  AdamState<T> state_;
};

}  // namespace flanet
