// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <opencv2/imgproc.hpp>

#include "flanet/harness.hpp"
#include "flanet/losses.hpp"
#include "flanet/ops.hpp"
#include "flanet/spectral_fusion.hpp"
#include "test_util.hpp"

using namespace flanet;
using flanet::testing::check_directional;
using flanet::testing::check_gradients;
using flanet::testing::random_tensor;
using V = Var<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void randomize(ParamStore<double>& store, std::mt19937_64& rng) {
  for (const auto& e : store.entries()) {
    Var<double> v = e.var;
    v.mutable_value() = random_tensor(v.shape(), rng, -0.8, 0.8);
  }
}

double mse_loop(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

Tensor<double> binary_mask(const Shape& shape, std::mt19937_64& rng) {
  Tensor<double> m(shape);
  for (int64_t i = 0; i < m.numel(); ++i) m[i] = (rng() % 3 == 0) ? 1.0 : 0.0;
  return m;
}

TrainConfig toy_config() {
  TrainConfig c = TrainConfig::desk();
  c.encoder_channels = {8, 16, 32, 64};
  c.input_size = 64;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<VideoRecord> synthetic_videos(int n, int frames) {
  std::vector<VideoRecord> out;
  for (int v = 0; v < n; ++v) {
    out.push_back(generate_synthetic_video(frames, 64, {}, 100 + v, "video_" + std::to_string(v)));
  }
  return out;
}

// ------------------------------------------------------------------ 1

Outcome spectral_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0;
  bool pack_exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t c = 1 + static_cast<int64_t>(rng() % 8);
    const int64_t h = 1 + static_cast<int64_t>(rng() % 40);
    const int64_t w = 1 + static_cast<int64_t>(rng() % 40);
    const double scale = std::pow(10.0, static_cast<double>(rng() % 7) - 3.0);
    const Tensor<float> x = random_tensor<float>({c, h, w}, rng, -scale, scale);
    const ComplexTensor<float> back = ifft2(fft2(x));
    double err = 0, mag = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      err = std::max(err, std::abs(static_cast<double>(back[i].real()) - x[i]));
      err = std::max(err, std::abs(static_cast<double>(back[i].imag())));
      mag = std::max(mag, std::abs(static_cast<double>(x[i])));
    }
    worst = std::max(worst, err / (1 + mag));

    const ComplexTensor<float> spec = fft2(x);
    pack_exact &= channels_to_complex(complex_to_channels(spec)) == spec;
    const Tensor<float> packed = random_tensor<float>({2 * c, h, w}, rng);
    pack_exact &= complex_to_channels(channels_to_complex(packed)) == packed;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && pack_exact && secs < 10,
          fmt("max rel error %.2e, pack exact %g, %.2f s", worst, pack_exact, secs)};
}

// ------------------------------------------------------------------ 2

Outcome global_receptive_field() {
  int untouched = 0, perturbations = 0;
  for (uint64_t seed : {21, 22, 23}) {
    std::mt19937_64 rng(seed);
    ParamStore<double> store;
    Rng init(seed);
    FfaBlock<double> ffa(store, "ffa", 4, init);
    randomize(store, rng);
    const Tensor<double> cur = random_tensor({1, 4, 8, 8}, rng), p2 = random_tensor({1, 4, 8, 8}, rng);
    Tensor<double> p1 = random_tensor({1, 4, 8, 8}, rng);
    auto pre = [&] {
      return ffa.trace(V::constant(cur), V::constant(p1), V::constant(p2)).pre_activation.value();
    };
    const double step = 1e-5;
    for (int64_t e = 0; e < p1.numel(); ++e) {
      const double keep = p1[e];
      p1[e] = keep + step;
      const Tensor<double> up = pre();
      p1[e] = keep - step;
      const Tensor<double> down = pre();
      p1[e] = keep;
      ++perturbations;
      for (int64_t r = 0; r < 8; ++r)
        for (int64_t c = 0; c < 8; ++c) {
          double jac = 0;
          for (int64_t ch = 0; ch < 4; ++ch) {
            jac = std::max(jac, std::abs(up.at(0, ch, r, c) - down.at(0, ch, r, c)) / (2 * step));
          }
          if (jac < 1e-8) ++untouched;
        }
    }
  }
  return {untouched == 0, fmt("%g perturbations of f_{t-1}, %g unreached output positions",
                              perturbations, untouched)};
}

// ------------------------------------------------------------------ 3

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(31);

  ParamStore<double> store;
  Rng init(31);
  FfaBlock<double> ffa(store, "ffa", 3, init);
  randomize(store, rng);
  V cur = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  V p1 = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  V p2 = V::parameter(random_tensor({1, 3, 5, 6}, rng));
  const Tensor<double> probe = random_tensor({1, 3, 5, 6}, rng);
  std::vector<V> ffa_inputs{cur, p1, p2};
  for (const auto& e : store.entries()) ffa_inputs.push_back(e.var);
  const double ffa_err =
      check_gradients(ffa_inputs, [&] { return ops::sum(ops::mul(ffa(cur, p1, p2), V::constant(probe))); })
          .rel_error;

  NetworkConfig net_config;
  net_config.encoder_channels = {8, 16, 32, 64};
  FlaNet<double> net(net_config, 32);
  auto img = [&] { return V::constant(random_tensor({1, 3, 64, 64}, rng, -0.5, 0.5)); };
  V a = img(), b = img(), c = img();
  const Tensor<double> probe_s = random_tensor({1, 1, 64, 64}, rng), probe_h = random_tensor({1, 1, 64, 64}, rng);
  auto net_f = [&] {
    NetworkOutput<double> out = net.forward(a, b, c);
    return ops::add(ops::sum(ops::mul(out.logits, V::constant(probe_s))),
                    ops::sum(ops::mul(out.heatmap, V::constant(probe_h))));
  };
  auto params = flanet::testing::all_params(net.params());
  // Entrywise at a small step to stay clear of ReLU kinks, plus a directional check.
  const double net_err = std::max(check_gradients(params, net_f, 1e-6, 3).rel_error,
                                  check_directional(params, net_f, 1e-4));

  V logits = V::parameter(random_tensor({2, 1, 5, 5}, rng, -3, 3));
  const Tensor<double> target = binary_mask({2, 1, 5, 5}, rng);
  V h1 = V::parameter(random_tensor({1, 1, 4, 4}, rng)), h2 = V::parameter(random_tensor({1, 1, 4, 4}, rng)),
    h3 = V::parameter(random_tensor({1, 1, 4, 4}, rng));
  double loss_err = 0;
  loss_err = std::max(loss_err, check_gradients({logits}, [&] { return ops::bce_with_logits(logits, target); }).rel_error);
  loss_err = std::max(loss_err, check_gradients({logits}, [&] {
                                  return soft_iou_loss(ops::sigmoid(logits), target);
                                }).rel_error);
  loss_err = std::max(loss_err, check_gradients({h1, h2}, [&] { return ops::mse(h1, h2); }).rel_error);
  loss_err = std::max(loss_err,
                      check_gradients({h1, h2, h3}, [&] { return contrastive_loss(h1, h2, h3, 2.0); }).rel_error);

  const double secs = seconds_since(t0);
  return {ffa_err < 1e-3 && net_err < 1e-3 && loss_err < 1e-4 && secs < 120,
          fmt("FFA %.2e, network %.2e, losses %.2e, %.1f s", ffa_err, net_err, loss_err, secs)};
}

// ------------------------------------------------------------------ 4

Outcome heatmap_ground_truth() {
  std::mt19937_64 rng(41);
  int bad_center = 0, bad_peak = 0, bad_radius = 0, bad_shift = 0;
  const double target = std::exp(-0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 32 + static_cast<int>(rng() % 64), w = 32 + static_cast<int>(rng() % 64);
    cv::Mat mask = cv::Mat::zeros(h, w, CV_8U);
    // Blobs stay in the central region so a shifted copy fits.
    const int blobs = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < blobs; ++k) {
      const cv::Point center(12 + static_cast<int>(rng() % (w - 24)), 12 + static_cast<int>(rng() % (h - 24)));
      const cv::Size axes(static_cast<int>(rng() % 7), static_cast<int>(rng() % 7));
      cv::ellipse(mask, center, axes, static_cast<double>(rng() % 180), 0, 360, cv::Scalar(1), cv::FILLED);
    }
    int rmin = h, rmax = -1, cmin = w, cmax = -1;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (mask.at<uint8_t>(r, c)) {
          rmin = std::min(rmin, r);
          rmax = std::max(rmax, r);
          cmin = std::min(cmin, c);
          cmax = std::max(cmax, c);
        }
    const int r0 = (rmin + rmax) / 2, c0 = (cmin + cmax) / 2;
    const Heatmap hm = heatmap_from_mask(mask, 5.0);
    const Tensor<float>& v = hm.values;

    int64_t arg = 0;
    for (int64_t i = 1; i < v.numel(); ++i)
      if (v[i] > v[arg]) arg = i;
    if (arg != static_cast<int64_t>(r0) * w + c0 || hm.center != Pixel{r0, c0}) ++bad_center;
    if (v[arg] != 1.0f) ++bad_peak;
    for (auto [dr, dc] : {std::pair{5, 0}, {-5, 0}, {0, 5}, {0, -5}, {3, 4}, {-4, -3}}) {
      const int r = r0 + dr, c = c0 + dc;
      if (r < 0 || r >= h || c < 0 || c >= w) continue;
      if (std::abs(v[static_cast<int64_t>(r) * w + c] - target) > 1e-6) ++bad_radius;
    }

    const int dr = static_cast<int>(rng() % 9) - 4, dc = static_cast<int>(rng() % 9) - 4;
    cv::Mat shifted = cv::Mat::zeros(h, w, CV_8U);
    mask(cv::Rect(std::max(0, -dc), std::max(0, -dr), w - std::abs(dc), h - std::abs(dr)))
        .copyTo(shifted(cv::Rect(std::max(0, dc), std::max(0, dr), w - std::abs(dc), h - std::abs(dr))));
    const Tensor<float>& s = heatmap_from_mask(shifted, 5.0).values;
    for (int r = 4; r < h - 4; ++r)
      for (int c = 4; c < w - 4; ++c) {
        if (std::abs(s[static_cast<int64_t>(r + dr) * w + c + dc] - v[static_cast<int64_t>(r) * w + c]) > 1e-7) {
          ++bad_shift;
          r = h;
          break;
        }
      }
  }
  return {bad_center + bad_peak + bad_radius + bad_shift == 0,
          fmt("1000 masks: center misses %g, peak misses %g, radius-5 misses %g, shift misses %g",
              bad_center, bad_peak, bad_radius, bad_shift)};
}

// ------------------------------------------------------------------ 5

V ones_map(int64_t n, int64_t ones) {
  Tensor<double> t({1, 1, 1, n});
  for (int64_t i = 0; i < ones; ++i) t[i] = 1.0;
  return V::constant(t);
}

Outcome loss_oracles() {
  const V zero = ones_map(10, 0);
  const double e1 = contrastive_loss(zero, zero, V::constant(Tensor<double>({1, 1, 1, 10}, std::sqrt(0.9))), 0.5).item();
  const double e2 = contrastive_loss(zero, ones_map(10, 3), ones_map(10, 3), 0.5).item();
  const double e3 = contrastive_loss(zero, ones_map(10, 2), ones_map(10, 1), 0.5).item();
  const bool examples = e1 == 0.0 && e2 == 0.5 && std::abs(e3 - 0.6) <= 1e-15;

  std::mt19937_64 rng(51);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    LossInputs<double> in;
    in.seg_logits = V::constant(random_tensor({2, 1, 6, 6}, rng, -2, 2));
    in.seg_target = binary_mask({2, 1, 6, 6}, rng);
    in.heatmap = V::constant(random_tensor({2, 1, 6, 6}, rng));
    in.heatmap_target = random_tensor({2, 1, 6, 6}, rng, 0, 1);
    for (int k = 0; k <= trial % 3; ++k) {
      in.triples.push_back({V::constant(random_tensor({1, 1, 6, 6}, rng)),
                            V::constant(random_tensor({1, 1, 6, 6}, rng)),
                            V::constant(random_tensor({1, 1, 6, 6}, rng))});
    }
    const double total = total_loss(in, {1, 1, 1}, 1.0).total.item();

    const Tensor<double>& z = in.seg_logits.value();
    const Tensor<double>& g = in.seg_target;
    double bce = 0, iou = 0;
    for (int64_t i = 0; i < z.numel(); ++i) {
      const double s = 1 / (1 + std::exp(-z[i]));
      bce -= g[i] * std::log(s) + (1 - g[i]) * std::log(1 - s);
    }
    bce /= static_cast<double>(z.numel());
    for (int64_t n = 0; n < 2; ++n) {
      double inter = 0, ss = 0, gs = 0;
      for (int64_t i = n * 36; i < (n + 1) * 36; ++i) {
        const double s = 1 / (1 + std::exp(-z[i]));
        inter += s * g[i];
        ss += s;
        gs += g[i];
      }
      iou += 1 - (inter + 1e-6) / (ss + gs - inter + 1e-6);
    }
    iou /= 2;
    const double mse = mse_loop(in.heatmap.value(), in.heatmap_target);
    double contrastive = 0;
    for (const auto& tr : in.triples) {
      contrastive += std::max(
          mse_loop(tr.anchor.value(), tr.positive.value()) - mse_loop(tr.anchor.value(), tr.negative.value()) + 1.0,
          0.0);
    }
    contrastive /= static_cast<double>(in.triples.size());
    worst = std::max(worst, std::abs(total - (contrastive + mse + bce + iou)));
  }
  return {examples && worst < 1e-6,
          fmt("contrastive examples %g / %g / %g, total vs independent sum %.2e", e1, e2, e3, worst)};
}

// ------------------------------------------------------------------ 6

Outcome metric_oracle() {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0, 1);
  int count_mismatch = 0, identity_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor<double> p({8, 8}), g({8, 8});
    const double density = u(rng);
    for (int64_t i = 0; i < 64; ++i) {
      p[i] = u(rng) < density ? 1.0 : 0.0;
      g[i] = u(rng) < density ? 1.0 : 0.0;
    }
    int64_t inter = 0, np = 0, ng = 0, uni = 0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) {
        const bool a = p[r * 8 + c] >= 0.5, b = g[r * 8 + c] > 0.5;
        inter += a && b;
        np += a;
        ng += b;
        uni += a || b;
      }
    const ConfusionCounts cc = confusion(p, g);
    if (cc.tp != inter || cc.tp + cc.fp != np || cc.tp + cc.fn != ng || cc.tn != 64 - uni) ++count_mismatch;
    const FrameMetrics m = frame_metrics(p, g);
    const double dice = uni ? 2.0 * inter / static_cast<double>(np + ng) : 1.0;
    const double jac = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    if (m.dice != dice || m.jaccard != jac) ++count_mismatch;
    if (std::abs(m.dice - 2 * m.jaccard / (1 + m.jaccard)) > 1e-12) ++identity_fail;
  }
  return {count_mismatch == 0 && identity_fail == 0,
          fmt("1000 pairs: %g oracle mismatches, %g identity failures", count_mismatch, identity_fail)};
}

// ------------------------------------------------------------------ 7

double overfit_dice(bool basic) {
  TrainConfig c = toy_config();
  c.max_steps = 200;
  c.epochs = 1000;
  c.val_interval = 1000;
  c.seed = 0;
  c.no_ffa = basic;
  c.no_loc_branch = basic;
  TrainData d{synthetic_videos(2, 20), {}};
  d.val = d.train;
  const TrainResult r = train(c, d);
  return r.epochs.back().val_dice;
}

Outcome overfit_sanity() {
  const auto t0 = std::chrono::steady_clock::now();
  const double full = overfit_dice(false);
  const double basic = overfit_dice(true);
  const double secs = seconds_since(t0);
  return {full > 0.90 && basic <= full + 0.05 && secs < 40 * 60,
          fmt("train dice full %.4f, basic %.4f (200 steps, lr 1e-3), %.1f s", full, basic, secs)};
}

// ------------------------------------------------------------------ 8

Outcome split_protocol() {
  DatasetIndex index;
  for (int i = 0; i < 572; ++i) {
    VideoEntry e;
    e.video_id = "mock_" + std::to_string(i);
    index.videos.push_back(e);
  }
  const SplitAssignment s = split_dataset(index, 0);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  const bool ok = s.train.size() == 230 && s.val.size() == 112 && s.test.size() == 230 && all.size() == 572;
  return {ok, fmt("572 videos -> %g/%g/%g", static_cast<double>(s.train.size()),
                  static_cast<double>(s.val.size()), static_cast<double>(s.test.size()))};
}

// ------------------------------------------------------------------ 9

Outcome determinism_and_checkpoint() {
  const fs::path root = fs::temp_directory_path() / ("flanet_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  generate_synthetic_dataset(root / "data", 5, 8, 64, 91);

  TrainConfig c = toy_config();
  c.data_root = (root / "data").string();
  c.seed = 9;
  c.max_steps = 10;
  c.epochs = 10;
  auto trace = [&] {
    std::vector<double> out;
    TrainResult r = train(c, [&](const StepLog& s) {
      out.push_back(s.terms.total);
      return true;
    });
    return std::pair{out, r};
  };
  const auto [first, result] = trace();
  const auto [second, unused] = trace();
  (void)unused;
  const bool same = first.size() == 10 && first == second;

  const fs::path ckpt = root / "best.ckpt";
  save_checkpoint(result.best, ckpt);
  const MetricsReport val = evaluate(ckpt, "val");
  const double diff = std::abs(val.frame_weighted.dice - result.best.best_val_dice);
  fs::remove_all(root);
  return {same && diff <= 1e-6,
          fmt("10-step traces identical %g, val dice %.6f vs reloaded %.6f", same,
              result.best.best_val_dice, val.frame_weighted.dice)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"spectral round trip and exact channel packing", spectral_round_trip},
      {"global receptive field of frequency fusion", global_receptive_field},
      {"gradients match finite differences", gradient_correctness},
      {"heatmap ground truth", heatmap_ground_truth},
      {"loss oracles", loss_oracles},
      {"metric oracle", metric_oracle},
      {"overfit sanity", overfit_sanity},
      {"split protocol", split_protocol},
      {"determinism and checkpoint round trip", determinism_and_checkpoint},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
