#include <gtest/gtest.h>

#include <cmath>

#include "flanet/ops.hpp"
#include "flanet/spectral_fusion.hpp"
#include "test_util.hpp"

using namespace flanet;
using flanet::testing::check_gradients;
using flanet::testing::random_tensor;
using V = Var<double>;
using C = std::complex<double>;

namespace {

// Independent CA(.) chain: concat -> group norm -> 1x1 -> ReLU -> 1x1 -> sigmoid.
Tensor<double> reference_attention(const ParamStore<double>& store, const std::string& name,
                                   const Tensor<double>& core, const Tensor<double>& aux,
                                   int groups) {
  const int64_t c2 = core.dim(1), h = core.dim(2), w = core.dim(3), hw = h * w;
  const int64_t c4 = 2 * c2;
  std::vector<double> pair(static_cast<size_t>(c4 * hw));
  for (int64_t c = 0; c < c4; ++c)
    for (int64_t i = 0; i < hw; ++i)
      pair[c * hw + i] = c < c2 ? core.at(0, c, i / w, i % w) : aux.at(0, c - c2, i / w, i % w);

  const Tensor<double>& gamma = store.at(name + ".norm.weight").value();
  const Tensor<double>& beta = store.at(name + ".norm.bias").value();
  const int64_t cpg = c4 / groups;
  for (int g = 0; g < groups; ++g) {
    double mean = 0, var = 0;
    for (int64_t i = g * cpg * hw; i < (g + 1) * cpg * hw; ++i) mean += pair[i];
    mean /= static_cast<double>(cpg * hw);
    for (int64_t i = g * cpg * hw; i < (g + 1) * cpg * hw; ++i) var += (pair[i] - mean) * (pair[i] - mean);
    var /= static_cast<double>(cpg * hw);
    for (int64_t i = g * cpg * hw; i < (g + 1) * cpg * hw; ++i) {
      const int64_t c = i / hw;
      pair[i] = (pair[i] - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
    }
  }

  auto pointwise = [&](const std::vector<double>& in, int64_t cin, const std::string& conv) {
    const Tensor<double>& wt = store.at(conv + ".weight").value();
    const Tensor<double>& b = store.at(conv + ".bias").value();
    const int64_t cout = wt.dim(0);
    std::vector<double> out(static_cast<size_t>(cout * hw));
    for (int64_t o = 0; o < cout; ++o)
      for (int64_t i = 0; i < hw; ++i) {
        double acc = b[o];
        for (int64_t k = 0; k < cin; ++k) acc += wt[o * cin + k] * in[k * hw + i];
        out[o * hw + i] = acc;
      }
    return out;
  };
  std::vector<double> hidden = pointwise(pair, c4, name + ".fc1");
  for (double& v : hidden) v = std::max(v, 0.0);
  std::vector<double> logits = pointwise(hidden, c2, name + ".fc2");
  Tensor<double> out({1, c2, h, w});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = 1 / (1 + std::exp(-logits[i]));
  return out;
}

void randomize(ParamStore<double>& store, std::mt19937_64& rng) {
  for (const auto& e : store.entries()) {
    Var<double> v = e.var;
    v.mutable_value() = random_tensor(v.shape(), rng, -0.8, 0.8);
  }
}

}  // namespace

TEST(Spectral, RoundTripRecoversInput) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t c = 1 + trial % 4, h = 3 + trial % 6, w = 2 + trial % 7;
    Tensor<double> x = random_tensor({c, h, w}, rng, -5, 5);
    ComplexTensor<double> back = ifft2(fft2(x));
    double err = 0, xmax = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      err = std::max(err, std::abs(back[i] - C(x[i], 0)));
      xmax = std::max(xmax, std::abs(x[i]));
    }
    EXPECT_LT(err / (1 + xmax), 1e-12);
  }
}

TEST(Spectral, ConstantMapHasOnlyDc) {
  const int64_t h = 5, w = 6;
  const double v = 1.75;
  ComplexTensor<double> spec = fft2(Tensor<double>({2, h, w}, v));
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t i = 0; i < h * w; ++i) {
      const C expected = i == 0 ? C(v * h * w, 0) : C(0, 0);
      EXPECT_NEAR(std::abs(spec[c * h * w + i] - expected), 0.0, 1e-12);
    }
}

TEST(Spectral, ParsevalEnergy) {
  std::mt19937_64 rng(2);
  Tensor<double> x = random_tensor({3, 7, 9}, rng);
  ComplexTensor<double> spec = fft2(x);
  double spatial = 0, spectral = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    spatial += x[i] * x[i];
    spectral += std::norm(spec[i]);
  }
  EXPECT_NEAR(spatial, spectral / 63.0, 1e-9 * spatial);
}

TEST(Spectral, RealInputIsHermitian) {
  std::mt19937_64 rng(3);
  const int64_t h = 6, w = 5;
  ComplexTensor<double> spec = fft2(random_tensor({1, h, w}, rng));
  for (int64_t u = 0; u < h; ++u)
    for (int64_t v = 0; v < w; ++v) {
      const C a = spec[u * w + v], b = spec[((h - u) % h) * w + (w - v) % w];
      EXPECT_NEAR(std::abs(a - std::conj(b)), 0.0, 1e-12);
    }
}

TEST(Spectral, FloatRoundTripWithinSinglePrecision) {
  std::mt19937_64 rng(4);
  Tensor<float> x = random_tensor<float>({4, 11, 11}, rng, -3, 3);
  ComplexTensor<float> back = ifft2(fft2(x));
  for (int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back[i].real(), x[i], 1e-5 * (1 + 3));
}

TEST(Spectral, PackUnpackIsExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-10, 10);
  ComplexTensor<double> spec({3, 4, 4});
  for (int64_t i = 0; i < spec.numel(); ++i) spec[i] = C(d(rng), d(rng));
  Tensor<double> packed = complex_to_channels(spec);
  ASSERT_EQ(packed.shape(), (Shape{6, 4, 4}));
  EXPECT_EQ(channels_to_complex(packed), spec);
  for (int64_t i = 0; i < 16; ++i) {
    EXPECT_EQ(packed[i], spec[i].real());
    EXPECT_EQ(packed[3 * 16 + i], spec[i].imag());
  }

  ComplexTensor<double> real_only({2, 3, 3});
  for (int64_t i = 0; i < real_only.numel(); ++i) real_only[i] = C(d(rng), 0);
  Tensor<double> p = complex_to_channels(real_only);
  for (int64_t i = 18; i < 36; ++i) EXPECT_EQ(p[i], 0.0);

  ComplexTensor<double> batched({2, 3, 2, 2});
  for (int64_t i = 0; i < batched.numel(); ++i) batched[i] = C(d(rng), d(rng));
  EXPECT_EQ(channels_to_complex(complex_to_channels(batched)), batched);
}

TEST(Spectral, OddChannelCountThrows) {
  EXPECT_THROW(channels_to_complex(Tensor<double>({3, 4, 4})), ShapeError);
}

TEST(Spectral, PackedOpAgreesWithComplexHelpers) {
  std::mt19937_64 rng(6);
  Tensor<double> x = random_tensor({1, 3, 5, 4}, rng);
  V packed = ops::fft2_packed(V::constant(x));
  Tensor<double> reference = complex_to_channels(fft2(x));
  EXPECT_LT(flanet::testing::max_abs_diff(packed.value(), reference), 1e-12);
}

TEST(ChannelAttentionTest, OutputStrictlyInUnitInterval) {
  std::mt19937_64 rng(7);
  ParamStore<double> store;
  Rng init(7);
  ChannelAttention<double> ca(store, "ca", 4, 8, init);
  randomize(store, rng);
  V a = ca(V::constant(random_tensor({2, 8, 5, 5}, rng, -50, 50)),
           V::constant(random_tensor({2, 8, 5, 5}, rng, -50, 50)));
  for (int64_t i = 0; i < a.value().numel(); ++i) {
    EXPECT_GT(a.value()[i], 0.0);
    EXPECT_LT(a.value()[i], 1.0);
  }
}

TEST(ChannelAttentionTest, ZeroInputsZeroBiasGiveHalf) {
  ParamStore<double> store;
  Rng init(8);
  ChannelAttention<double> ca(store, "ca", 3, 8, init);
  V a = ca(V::constant(Tensor<double>({1, 6, 4, 4})), V::constant(Tensor<double>({1, 6, 4, 4})));
  for (int64_t i = 0; i < a.value().numel(); ++i) EXPECT_DOUBLE_EQ(a.value()[i], 0.5);
}

TEST(ChannelAttentionTest, MatchesStraightLineReference) {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  Rng init(9);
  const int64_t c = 4;
  ChannelAttention<double> ca(store, "ca", c, 8, init);
  randomize(store, rng);
  Tensor<double> core = random_tensor({1, 2 * c, 6, 6}, rng), aux = random_tensor({1, 2 * c, 6, 6}, rng);
  V a = ca(V::constant(core), V::constant(aux));
  Tensor<double> ref = reference_attention(store, "ca", core, aux, norm_groups_for(4 * c, 8));
  EXPECT_LT(flanet::testing::max_abs_diff(a.value(), ref), 1e-12);
}

TEST(ChannelAttentionTest, ShapeMismatchThrows) {
  ParamStore<double> store;
  Rng init(10);
  ChannelAttention<double> ca(store, "ca", 2, 8, init);
  EXPECT_THROW(ca(V::constant(Tensor<double>({1, 4, 3, 3})), V::constant(Tensor<double>({1, 4, 3, 4}))),
               ShapeError);
}

TEST(Ffa, PreservesShape) {
  ParamStore<float> store;
  Rng init(11);
  std::mt19937_64 rng(11);
  FfaBlock<float> ffa(store, "ffa", 64, init);
  auto f = [&] { return Var<float>::constant(random_tensor<float>({1, 64, 22, 22}, rng)); };
  Var<float> out = ffa(f(), f(), f());
  EXPECT_EQ(out.shape(), (Shape{1, 64, 22, 22}));
  for (int64_t i = 0; i < out.value().numel(); ++i) EXPECT_GE(out.value()[i], 0.0f);
}

TEST(Ffa, ShapeMismatchThrows) {
  ParamStore<double> store;
  Rng init(12);
  FfaBlock<double> ffa(store, "ffa", 4, init);
  V a = V::constant(Tensor<double>({1, 4, 6, 6}));
  EXPECT_THROW(ffa(a, a, V::constant(Tensor<double>({1, 4, 6, 5}))), ShapeError);
  V wrong = V::constant(Tensor<double>({1, 3, 6, 6}));
  EXPECT_THROW(ffa(wrong, wrong, wrong), ShapeError);
}

TEST(Ffa, IdenticalAuxiliaryFramesGiveIdenticalBranches) {
  std::mt19937_64 rng(13);
  ParamStore<double> store;
  Rng init(13);
  FfaBlock<double> ffa(store, "ffa", 4, init);
  randomize(store, rng);
  // Share the two CA parameter sets so the groups coincide.
  for (const auto& e : store.entries()) {
    if (e.name.rfind("ffa.ca2.", 0) == 0) {
      Var<double> dst = e.var;
      dst.mutable_value() = store.at("ffa.ca1." + e.name.substr(8)).value();
    }
  }
  V cur = V::constant(random_tensor({1, 4, 8, 8}, rng));
  V prev = V::constant(random_tensor({1, 4, 8, 8}, rng));
  FfaTrace<double> t = ffa.trace(cur, prev, prev);
  EXPECT_LT(flanet::testing::max_abs_diff(t.z1.value(), t.z2.value()), 1e-12);
  V expected = ffa.fuse(ops::scale(t.z1, 2.0));
  EXPECT_LT(flanet::testing::max_abs_diff(t.output.value(), expected.value()), 1e-5);
}

TEST(Ffa, GatingNeverIncreasesMagnitude) {
  std::mt19937_64 rng(14);
  ParamStore<double> store;
  Rng init(14);
  FfaBlock<double> ffa(store, "ffa", 3, init);
  randomize(store, rng);
  auto r = [&] { return V::constant(random_tensor({2, 3, 5, 7}, rng)); };
  FfaTrace<double> t = ffa.trace(r(), r(), r());
  for (int64_t i = 0; i < t.x_core.value().numel(); ++i) {
    EXPECT_LE(std::abs(t.gated1.value()[i]), std::abs(t.x_core.value()[i]));
    EXPECT_LE(std::abs(t.gated2.value()[i]), std::abs(t.x_core.value()[i]));
  }
}

TEST(Ffa, AuxiliaryGateOption) {
  std::mt19937_64 rng(15);
  ParamStore<double> store;
  Rng init(15);
  FfaBlock<double> ffa(store, "ffa", 2, init, {8, GateTarget::kAuxiliary});
  auto r = [&] { return V::constant(random_tensor({1, 2, 4, 4}, rng)); };
  FfaTrace<double> t = ffa.trace(r(), r(), r());
  for (int64_t i = 0; i < t.gated1.value().numel(); ++i) {
    EXPECT_DOUBLE_EQ(t.gated1.value()[i], t.attention1.value()[i] * t.x_prev1.value()[i]);
    EXPECT_DOUBLE_EQ(t.gated2.value()[i], t.attention2.value()[i] * t.x_prev2.value()[i]);
  }
}

TEST(Ffa, PerturbationReachesEveryPosition) {
  std::mt19937_64 rng(16);
  ParamStore<double> store;
  Rng init(16);
  FfaBlock<double> ffa(store, "ffa", 4, init);
  randomize(store, rng);
  Tensor<double> cur = random_tensor({1, 4, 8, 8}, rng), p1 = random_tensor({1, 4, 8, 8}, rng),
                 p2 = random_tensor({1, 4, 8, 8}, rng);
  FfaTrace<double> base = ffa.trace(V::constant(cur), V::constant(p1), V::constant(p2));
  p1.at(0, 1, 3, 5) += 1e-3;
  FfaTrace<double> moved = ffa.trace(V::constant(cur), V::constant(p1), V::constant(p2));
  for (int64_t r = 0; r < 8; ++r)
    for (int64_t c = 0; c < 8; ++c) {
      double change = 0;
      for (int64_t ch = 0; ch < 4; ++ch)
        change = std::max(change, std::abs(moved.pre_activation.value().at(0, ch, r, c) -
                                           base.pre_activation.value().at(0, ch, r, c)));
      EXPECT_GT(change, 1e-12) << "position " << r << "," << c;
    }
}

TEST(Ffa, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  ParamStore<double> store;
  Rng init(17);
  FfaBlock<double> ffa(store, "ffa", 3, init);
  randomize(store, rng);
  V cur = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  V p1 = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  V p2 = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  Tensor<double> probe = random_tensor({1, 3, 5, 6}, rng);
  auto f = [&] { return ops::sum(ops::mul(ffa(cur, p1, p2), V::constant(probe))); };
  std::vector<V> inputs{cur, p1, p2};
  for (const auto& e : store.entries()) inputs.push_back(e.var);
  EXPECT_LT(check_gradients(inputs, f).rel_error, 1e-4);
}

TEST(Ffa, DeterministicOutput) {
  std::mt19937_64 rng(18);
  ParamStore<float> store;
  Rng init(18);
  FfaBlock<float> ffa(store, "ffa", 8, init);
  auto r = [&] { return Var<float>::constant(random_tensor<float>({1, 8, 11, 11}, rng)); };
  Var<float> a = r(), b = r(), c = r();
  EXPECT_EQ(ffa(a, b, c).value(), ffa(a, b, c).value());
}
