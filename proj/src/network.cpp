#include "flanet/network.hpp"

namespace flanet {
namespace {

// FNV-1a, so per-module random streams do not depend on std::hash.
uint64_t stream_seed(uint64_t seed, const std::string& name) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return seed ^ h;
}

}  // namespace

ChannelSchedule NetworkConfig::resolved_decoder_channels() const {
  if (decoder_channels == ChannelSchedule{0, 0, 0, 0}) {
    return {encoder_channels[2], encoder_channels[1], encoder_channels[0], encoder_channels[0]};
  }
  return decoder_channels;
}

std::array<Shape, 4> pyramid_shapes(const ChannelSchedule& channels, int64_t batch, int64_t h,
                                    int64_t w) {
  if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0) {
    throw ShapeError("encoder input " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by 32");
  }
  std::array<Shape, 4> out;
  for (size_t i = 0; i < 4; ++i) {
    out[i] = {batch, channels[i], h / kPyramidStrides[i], w / kPyramidStrides[i]};
  }
  return out;
}

template <typename T>
ResidualBlock<T>::ResidualBlock(ParamStore<T>& store, const std::string& name, int64_t channels,
                                int groups, Rng& rng)
    : first_(store, name + ".a", channels, channels, groups, rng),
      second_(store, name + ".b", channels, channels, groups, rng) {}

template <typename T>
Var<T> ResidualBlock<T>::operator()(const Var<T>& x) const {
  return ops::relu(ops::add(x, second_.pre_activation(first_(x))));
}

template <typename T>
Encoder<T>::Encoder(ParamStore<T>& store, const std::string& name,
                    const ChannelSchedule& channels, int groups, Rng& rng)
    : stem_(store, name + ".stem", 3, channels[0], groups, rng, 2) {
  int64_t in = channels[0];
  for (size_t i = 0; i < 4; ++i) {
    const std::string stage = name + ".stage" + std::to_string(i + 1);
    down_[i] = BConv<T>(store, stage + ".down", in, channels[i], groups, rng, 2);
    blocks_[i] = ResidualBlock<T>(store, stage + ".res", channels[i], groups, rng);
    in = channels[i];
  }
}

template <typename T>
EncoderPyramid<T> Encoder<T>::operator()(const Var<T>& image) const {
  EncoderPyramid<T> pyramid;
  Var<T> x = stem_(image);
  for (size_t i = 0; i < 4; ++i) {
    x = blocks_[i](down_[i](x));
    pyramid.stages[i] = x;
  }
  return pyramid;
}

template <typename T>
FlaNet<T>::FlaNet(const NetworkConfig& config, uint64_t seed) : config_(config) {
  const auto& enc = config.encoder_channels;
  const auto dec = config.resolved_decoder_channels();
  for (size_t i = 0; i < 4; ++i) {
    if (enc[i] <= 0 || dec[i] <= 0) throw ConfigError("channel schedules must be positive");
  }
  const int groups = config.norm_groups;

  Rng enc_rng(stream_seed(seed, "encoder"));
  encoder_ = Encoder<T>(params_, "encoder", enc, groups, enc_rng);

  Rng fusion_rng(stream_seed(seed, "fusion"));
  if (config.use_ffa) {
    ffa_ = FfaBlock<T>(params_, "ffa", enc[3], fusion_rng, {groups, config.gate});
  } else {
    concat_fusion_ = Conv2d<T>(params_, "concat_fusion", 3 * enc[3], enc[3], 1, 1, fusion_rng);
  }

  // Segmentation layers take the upsampled previous output plus an encoder
  // skip (stages 3, 2, 1); the fourth layer has no skip.
  Rng seg_rng(stream_seed(seed, "decoder.seg"));
  const std::array<int64_t, 4> skip_channels{enc[2], enc[1], enc[0], 0};
  int64_t in = enc[3];
  for (size_t i = 0; i < 4; ++i) {
    seg_layers_[i] = BConv<T>(params_, "decoder.seg." + std::to_string(i),
                              in + skip_channels[i], dec[i], groups, seg_rng);
    in = dec[i];
  }
  seg_fuse_ = BConv<T>(params_, "decoder.seg_fuse", dec[3], dec[3], groups, seg_rng);
  seg_head_ = Conv2d<T>(params_, "decoder.seg_head", dec[3], 1, 1, 1, seg_rng);

  if (config.use_loc_branch) {
    Rng loc_rng(stream_seed(seed, "decoder.loc"));
    in = enc[3];
    for (size_t i = 0; i < 4; ++i) {
      loc_layers_[i] =
          BConv<T>(params_, "decoder.loc." + std::to_string(i), in, dec[i], groups, loc_rng);
      in = dec[i];
    }
    loc_head_ = Conv2d<T>(params_, "decoder.loc_head", dec[3], 1, 1, 1, loc_rng);
  }
}

template <typename T>
EncoderPyramid<T> FlaNet<T>::encode(const Var<T>& frames) const {
  require_rank(frames.shape(), 4, "encode");
  if (frames.shape()[1] != 3) throw ShapeError("encode: expected 3-channel frames");
  const auto expected = pyramid_shapes(config_.encoder_channels, frames.shape()[0],
                                       frames.shape()[2], frames.shape()[3]);
  EncoderPyramid<T> pyramid = encoder_(frames);
  for (size_t i = 0; i < 4; ++i) {
    require_same_shape(pyramid.stages[i].shape(), expected[i], "encoder stage");
  }
  return pyramid;
}

template <typename T>
Var<T> FlaNet<T>::aggregate(const Var<T>& current, const Var<T>& prev1,
                            const Var<T>& prev2) const {
  if (config_.use_ffa) return ffa_(current, prev1, prev2);
  require_same_shape(current.shape(), prev1.shape(), "aggregate");
  require_same_shape(current.shape(), prev2.shape(), "aggregate");
  return concat_fusion_(ops::concat_channels<T>({current, prev1, prev2}));
}

template <typename T>
DecodeResult<T> FlaNet<T>::decode(const Var<T>& aggregated,
                                  const EncoderPyramid<T>& skips) const {
  require_same_shape(aggregated.shape(), skips.deepest().shape(), "decode input");
  const bool loc = config_.use_loc_branch;

  std::array<Var<T>, 4> seg, lo;
  Var<T> s = aggregated;
  Var<T> l = aggregated;
  for (size_t i = 0; i < 4; ++i) {
    Var<T> up = ops::upsample2x(s);
    if (i < 3) up = ops::concat_channels<T>({up, skips.stages[2 - i]});
    seg[i] = seg_layers_[i](up);
    if (loc) {
      lo[i] = loc_layers_[i](ops::upsample2x(l));
      l = lo[i];
    }
    s = seg[i];
    // The localization features join the segmentation path at the last two layers.
    if (loc && i >= 2) {
      require_same_shape(seg[i].shape(), lo[i].shape(), "decoder taps");
      s = ops::add(seg[i], lo[i]);
    }
  }

  DecodeResult<T> out;
  out.taps.seg1 = seg[3];
  out.taps.seg2 = seg[2];
  if (loc) {
    out.taps.loc1 = lo[3];
    out.taps.loc2 = lo[2];
    out.heatmap = ops::upsample2x(loc_head_(lo[3]));
  }
  out.logits = ops::upsample2x(seg_head_(seg_fuse_(s)));
  return out;
}

template <typename T>
NetworkOutput<T> FlaNet<T>::forward(const Var<T>& current, const Var<T>& prev1,
                                    const Var<T>& prev2) const {
  require_same_shape(current.shape(), prev1.shape(), "forward frames");
  require_same_shape(current.shape(), prev2.shape(), "forward frames");
  const EncoderPyramid<T> now = encode(current);
  const EncoderPyramid<T> p1 = encode(prev1);
  const EncoderPyramid<T> p2 = encode(prev2);

  NetworkOutput<T> out;
  out.aggregated = aggregate(now.deepest(), p1.deepest(), p2.deepest());
  DecodeResult<T> dec = decode(out.aggregated, now);
  out.logits = dec.logits;
  out.prob = ops::sigmoid(dec.logits);
  out.heatmap = dec.heatmap;
  out.taps = dec.taps;
  return out;
}

template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class Encoder<float>;
template class Encoder<double>;
template class FlaNet<float>;
template class FlaNet<double>;

}  // namespace flanet
