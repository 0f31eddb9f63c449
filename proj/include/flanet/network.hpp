#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flanet/layers.hpp"
#include "flanet/spectral_fusion.hpp"

namespace flanet {

using ChannelSchedule = std::array<int64_t, 4>;

struct NetworkConfig {
  ChannelSchedule encoder_channels{32, 64, 128, 256};
  /// Widths of the four decoder layers; all-zero derives (c3, c2, c1, c1).
  ChannelSchedule decoder_channels{0, 0, 0, 0};
  int norm_groups = 8;
  bool use_ffa = true;
  bool use_loc_branch = true;
  GateTarget gate = GateTarget::kCore;

  ChannelSchedule resolved_decoder_channels() const;
};

inline constexpr std::array<int64_t, 4> kPyramidStrides{4, 8, 16, 32};

/// Expected n x c x h x w shape of each encoder stage for an h x w input.
/// Throws ShapeError when h or w is not divisible by 32.
std::array<Shape, 4> pyramid_shapes(const ChannelSchedule& channels, int64_t batch, int64_t h,
                                    int64_t w);

template <typename T>
struct EncoderPyramid {
  std::array<Var<T>, 4> stages;  // strides 4, 8, 16, 32
  const Var<T>& deepest() const { return stages[3]; }
};

/// d^1 is the last decoder layer, d^2 the one before it.
template <typename T>
struct DecoderTaps {
  Var<T> seg1, seg2;
  Var<T> loc1, loc2;  // undefined without a localization branch
};

template <typename T>
struct DecodeResult {
  Var<T> logits;   // n x 1 x H x W
  Var<T> heatmap;  // n x 1 x H x W, undefined without a localization branch
  DecoderTaps<T> taps;
};

template <typename T>
struct NetworkOutput {
  Var<T> logits;
  Var<T> prob;     // sigmoid(logits)
  Var<T> heatmap;  // linear head, undefined without a localization branch
  Var<T> aggregated;
  DecoderTaps<T> taps;
};

template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamStore<T>& store, const std::string& name, int64_t channels, int groups,
                Rng& rng);
  Var<T> operator()(const Var<T>& x) const;

 private:
  BConv<T> first_;
  BConv<T> second_;  // pre-activation output only
};

/// Four-stage residual encoder producing a stride {4, 8, 16, 32} pyramid.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore<T>& store, const std::string& name, const ChannelSchedule& channels,
          int groups, Rng& rng);
  EncoderPyramid<T> operator()(const Var<T>& image) const;

 private:
  BConv<T> stem_;
  std::array<BConv<T>, 4> down_;
  std::array<ResidualBlock<T>, 4> blocks_;
};

/// FLA-Net: shared encoder, temporal aggregation, two-branch decoder.
template <typename T>
class FlaNet {
 public:
  FlaNet(const NetworkConfig& config, uint64_t seed);

  FlaNet(const FlaNet&) = delete;
  FlaNet& operator=(const FlaNet&) = delete;
  FlaNet(FlaNet&&) = default;
  FlaNet& operator=(FlaNet&&) = default;

  /// Frames are n x 3 x H x W with H, W divisible by 32.
  EncoderPyramid<T> encode(const Var<T>& frames) const;

  /// FFA on the deepest features, or concat + 1x1 conv when FFA is disabled.
  Var<T> aggregate(const Var<T>& current, const Var<T>& prev1, const Var<T>& prev2) const;

  DecodeResult<T> decode(const Var<T>& aggregated, const EncoderPyramid<T>& skips) const;

  NetworkOutput<T> forward(const Var<T>& current, const Var<T>& prev1,
                           const Var<T>& prev2) const;

  const NetworkConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const FfaBlock<T>* ffa() const { return config_.use_ffa ? &ffa_ : nullptr; }

 private:
  NetworkConfig config_;
  ParamStore<T> params_;
  Encoder<T> encoder_;
  FfaBlock<T> ffa_;
  Conv2d<T> concat_fusion_;
  std::array<BConv<T>, 4> seg_layers_;
  std::array<BConv<T>, 4> loc_layers_;
  BConv<T> seg_fuse_;
  Conv2d<T> seg_head_;
  Conv2d<T> loc_head_;
};

extern template class ResidualBlock<float>;
extern template class ResidualBlock<double>;
extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class FlaNet<float>;
extern template class FlaNet<double>;

}  // namespace flanet
