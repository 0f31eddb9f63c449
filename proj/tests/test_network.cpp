#include <gtest/gtest.h>

#include <cmath>

#include "flanet/network.hpp"
#include "flanet/ops.hpp"
#include "test_util.hpp"

using namespace flanet;
using flanet::testing::random_tensor;

namespace {

NetworkConfig toy(bool ffa = true, bool loc = true) {
  NetworkConfig c;
  c.encoder_channels = {8, 16, 32, 64};
  c.use_ffa = ffa;
  c.use_loc_branch = loc;
  return c;
}

template <typename T>
Var<T> image(std::mt19937_64& rng, int64_t n = 1, int64_t size = 64) {
  return Var<T>::constant(random_tensor<T>({n, 3, size, size}, rng, -0.5, 0.5));
}

bool all_finite(const Tensor<float>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

}  // namespace

TEST(Network, PyramidShapeArithmetic) {
  auto s = pyramid_shapes({32, 64, 128, 256}, 1, 352, 352);
  EXPECT_EQ(s[3], (Shape{1, 256, 11, 11}));
  EXPECT_EQ(s[0], (Shape{1, 32, 88, 88}));
  auto res2net = pyramid_shapes({256, 512, 1024, 2048}, 1, 352, 352);
  EXPECT_EQ(res2net[3], (Shape{1, 2048, 11, 11}));
  EXPECT_THROW(pyramid_shapes({32, 64, 128, 256}, 1, 100, 100), ShapeError);
}

TEST(Network, EncoderMatchesPyramidShapes) {
  std::mt19937_64 rng(1);
  FlaNet<float> net(toy(), 1);
  EncoderPyramid<float> p = net.encode(image<float>(rng, 2, 96));
  auto expected = pyramid_shapes(toy().encoder_channels, 2, 96, 96);
  for (size_t i = 0; i < 4; ++i) EXPECT_EQ(p.stages[i].shape(), expected[i]);
}

TEST(Network, DefaultScheduleAtFullResolution) {
  std::mt19937_64 rng(2);
  NetworkConfig c;
  FlaNet<float> net(c, 2);
  EncoderPyramid<float> p = net.encode(image<float>(rng, 1, 352));
  EXPECT_EQ(p.deepest().shape(), (Shape{1, 256, 11, 11}));
  EXPECT_THROW(net.encode(image<float>(rng, 1, 100)), ShapeError);
}

TEST(Network, ForwardShapesAndRanges) {
  std::mt19937_64 rng(3);
  FlaNet<float> net(toy(), 3);
  NetworkOutput<float> out = net.forward(image<float>(rng, 2), image<float>(rng, 2), image<float>(rng, 2));
  EXPECT_EQ(out.logits.shape(), (Shape{2, 1, 64, 64}));
  ASSERT_TRUE(out.heatmap);
  EXPECT_EQ(out.heatmap.shape(), (Shape{2, 1, 64, 64}));
  EXPECT_EQ(out.taps.seg1.shape(), out.taps.loc1.shape());
  EXPECT_EQ(out.taps.seg2.shape(), out.taps.loc2.shape());
  EXPECT_EQ(out.taps.seg1.shape()[2], 32);
  for (int64_t i = 0; i < out.prob.value().numel(); ++i) {
    EXPECT_GE(out.prob.value()[i], 0.0f);
    EXPECT_LE(out.prob.value()[i], 1.0f);
  }
  EXPECT_TRUE(all_finite(out.logits.value()));
  EXPECT_TRUE(all_finite(out.heatmap.value()));
}

TEST(Network, NoLocBranchDropsHeatmap) {
  std::mt19937_64 rng(4);
  FlaNet<float> net(toy(true, false), 4);
  NetworkOutput<float> out = net.forward(image<float>(rng), image<float>(rng), image<float>(rng));
  EXPECT_FALSE(out.heatmap);
  EXPECT_EQ(out.logits.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_EQ(net.params().count("decoder.loc"), 0);
}

TEST(Network, BasicAblationHasNoFfaOrLocParameters) {
  FlaNet<float> basic(toy(false, false), 5);
  EXPECT_EQ(basic.params().count("ffa."), 0);
  EXPECT_EQ(basic.params().count("decoder.loc"), 0);
  EXPECT_GT(basic.params().count("concat_fusion."), 0);
  EXPECT_EQ(basic.ffa(), nullptr);
}

TEST(Network, ParameterCountsOrdered) {
  FlaNet<float> full(toy(), 6), no_ffa(toy(false, true), 6);
  const int64_t encoder = full.params().count("encoder.");
  EXPECT_GT(full.params().count(), no_ffa.params().count());
  EXPECT_GT(no_ffa.params().count(), encoder);
  EXPECT_EQ(no_ffa.params().count("encoder."), encoder);
}

TEST(Network, ZeroedLocalizationBranchEqualsNoLocModel) {
  std::mt19937_64 rng(7);
  FlaNet<double> full(toy(), 7), seg_only(toy(true, false), 7);
  for (const auto& e : full.params().entries()) {
    if (e.name.rfind("decoder.loc", 0) == 0) {
      Var<double> v = e.var;
      v.mutable_value().fill(0.0);
    }
  }
  auto a = image<double>(rng), b = image<double>(rng), c = image<double>(rng);
  NetworkOutput<double> x = full.forward(a, b, c), y = seg_only.forward(a, b, c);
  EXPECT_LT(flanet::testing::max_abs_diff(x.logits.value(), y.logits.value()), 1e-12);
}

TEST(Network, SegmentationLossReachesLocalizationBranch) {
  std::mt19937_64 rng(8);
  FlaNet<float> net(toy(), 8);
  NetworkOutput<float> out = net.forward(image<float>(rng), image<float>(rng), image<float>(rng));
  Tensor<float> mask({1, 1, 64, 64});
  for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = (i % 64 > 20 && i / 64 < 40) ? 1.0f : 0.0f;
  backward(ops::bce_with_logits(out.logits, mask));
  double norm = 0;
  for (const auto& e : net.params().entries()) {
    if (e.name.rfind("decoder.loc.", 0) != 0 || e.var.grad().empty()) continue;
    for (int64_t i = 0; i < e.var.grad().numel(); ++i) norm += double(e.var.grad()[i]) * e.var.grad()[i];
  }
  EXPECT_GT(norm, 0.0);
  // The heatmap head only feeds H_t.
  const Var<float>& head = net.params().at("decoder.loc_head.weight");
  EXPECT_TRUE(head.grad().empty() || head.grad().numel() == 0 ||
              std::all_of(head.grad().values().begin(), head.grad().values().end(),
                          [](float g) { return g == 0.0f; }));
}

TEST(Network, EncoderSharedAcrossFrames) {
  std::mt19937_64 rng(9);
  FlaNet<double> net(toy(), 9);
  auto cur = image<double>(rng), p1 = image<double>(rng), p2 = image<double>(rng);
  const Var<double> swapped = net.forward(cur, p2, p1).aggregated;
  const Var<double> reference = (*net.ffa())(net.encode(cur).deepest(), net.encode(p2).deepest(),
                                             net.encode(p1).deepest());
  EXPECT_EQ(swapped.value(), reference.value());
  EXPECT_GT(flanet::testing::max_abs_diff(swapped.value(), net.forward(cur, p1, p2).aggregated.value()),
            0.0);
}

TEST(Network, SameSeedSameWeights) {
  FlaNet<float> a(toy(), 10), b(toy(), 10), c(toy(), 11);
  ASSERT_EQ(a.params().entries().size(), b.params().entries().size());
  bool any_diff = false;
  for (size_t i = 0; i < a.params().entries().size(); ++i) {
    EXPECT_EQ(a.params().entries()[i].var.value(), b.params().entries()[i].var.value());
    any_diff |= !(a.params().entries()[i].var.value() == c.params().entries()[i].var.value());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Network, EndToEndGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  FlaNet<double> net(toy(), 12);
  auto a = image<double>(rng), b = image<double>(rng), c = image<double>(rng);
  Tensor<double> probe = random_tensor({1, 1, 64, 64}, rng), probe_h = random_tensor({1, 1, 64, 64}, rng);
  auto f = [&] {
    NetworkOutput<double> out = net.forward(a, b, c);
    return ops::add(ops::sum(ops::mul(out.logits, Var<double>::constant(probe))),
                    ops::sum(ops::mul(out.heatmap, Var<double>::constant(probe_h))));
  };
  auto params = flanet::testing::all_params(net.params());
  // A small step keeps entrywise differences off the ReLU kinks.
  EXPECT_LT(flanet::testing::check_gradients(params, f, 1e-6, 3).rel_error, 1e-3);
  EXPECT_LT(flanet::testing::check_directional(params, f, 1e-4), 1e-3);
}
