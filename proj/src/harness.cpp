#include "flanet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "flanet/optim.hpp"

namespace flanet {
namespace {

constexpr size_t kEvalChunk = 8;

void write_image(const cv::Mat& bgr, int64_t slot, Tensor<float>& out) {
  const int64_t h = bgr.rows, w = bgr.cols;
  float* base = out.data() + slot * 3 * h * w;
  for (int r = 0; r < bgr.rows; ++r) {
    const auto* row = bgr.ptr<cv::Vec3b>(r);
    for (int c = 0; c < bgr.cols; ++c) {
      for (int k = 0; k < 3; ++k) {
        base[(k * h + r) * w + c] = static_cast<float>(row[c][k]) / 255.0f - 0.5f;
      }
    }
  }
}

Tensor<float> plane(const Tensor<float>& batch, int64_t index) {
  const int64_t h = batch.dim(2), w = batch.dim(3);
  std::vector<float> v(batch.data() + index * h * w, batch.data() + (index + 1) * h * w);
  return Tensor<float>({h, w}, std::move(v));
}

std::vector<VideoRecord> load_videos(const DatasetIndex& index,
                                     const std::vector<std::string>& ids) {
  std::vector<VideoRecord> out;
  for (const auto& id : ids) out.push_back(load_video(index.find(id)));
  return out;
}

}  // namespace

Tensor<float> image_to_tensor(const cv::Mat& bgr) {
  if (bgr.type() != CV_8UC3) throw ValidationError("expected an 8-bit 3-channel image");
  Tensor<float> out({3, bgr.rows, bgr.cols});
  write_image(bgr, 0, out);
  return out;
}

BatchTensors make_batch(std::span<const FrameTriplet> triplets) {
  if (triplets.empty()) throw EmptyError("empty batch");
  const int64_t n = static_cast<int64_t>(triplets.size());
  const int64_t h = triplets[0].current.rows, w = triplets[0].current.cols;
  BatchTensors b{Tensor<float>({n, 3, h, w}), Tensor<float>({n, 3, h, w}),
                 Tensor<float>({n, 3, h, w}), Tensor<float>({n, 1, h, w}),
                 Tensor<float>({n, 1, h, w})};
  for (int64_t i = 0; i < n; ++i) {
    const FrameTriplet& t = triplets[static_cast<size_t>(i)];
    for (const cv::Mat* m : {&t.current, &t.prev1, &t.prev2}) {
      if (m->rows != h || m->cols != w) throw ShapeError("batch frames differ in size");
    }
    write_image(t.current, i, b.current);
    write_image(t.prev1, i, b.prev1);
    write_image(t.prev2, i, b.prev2);
    for (int r = 0; r < h; ++r) {
      const uint8_t* row = t.gt_mask.ptr<uint8_t>(r);
      for (int c = 0; c < w; ++c) b.mask.at(i, 0, r, c) = row[c] ? 1.0f : 0.0f;
    }
    if (t.gt_heatmap) {
      std::copy_n(t.gt_heatmap->values.data(), h * w, b.heatmap.data() + i * h * w);
    }
  }
  return b;
}

std::vector<FrameTriplet> sample_training_batch(std::span<const VideoRecord> videos,
                                                const TrainConfig& config, Rng& rng) {
  std::vector<size_t> eligible;
  for (size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].size() >= 2) eligible.push_back(i);
  }
  if (eligible.empty()) throw ConfigError("no training video has two or more frames");

  const size_t wanted = static_cast<size_t>((config.batch_size + 1) / 2);
  std::vector<size_t> chosen;
  while (chosen.size() < wanted) {
    std::vector<size_t> pool = eligible;
    for (size_t i = 0; i < pool.size() && chosen.size() < wanted; ++i) {
      std::swap(pool[i], pool[i + rng() % (pool.size() - i)]);
      chosen.push_back(pool[i]);
    }
  }

  std::vector<FrameTriplet> batch;
  for (size_t v : chosen) {
    const VideoRecord& video = videos[v];
    const int t = static_cast<int>(rng() % (video.size() - 1));
    for (int core : {t, t + 1}) {
      if (batch.size() == static_cast<size_t>(config.batch_size)) break;
      batch.push_back(sample_triplet(video, core, config.input_size, config.sigma));
    }
  }
  return batch;
}

Loss<float> batch_loss(const FlaNet<float>& model, std::span<const FrameTriplet> batch,
                       const TrainConfig& config, uint64_t negative_seed) {
  const BatchTensors b = make_batch(batch);
  const NetworkOutput<float> out =
      model.forward(Var<float>::constant(b.current), Var<float>::constant(b.prev1),
                    Var<float>::constant(b.prev2));

  LossInputs<float> in;
  in.seg_logits = out.logits;
  in.seg_target = b.mask;
  if (out.heatmap) {
    in.heatmap = out.heatmap;
    in.heatmap_target = b.heatmap;
  }
  if (config.contrastive_enabled() && out.heatmap) {
    const int64_t hw = b.heatmap.dim(2) * b.heatmap.dim(3);
    for (size_t i = 1; i < batch.size(); ++i) {
      const FrameTriplet& now = batch[i];
      const FrameTriplet& before = batch[i - 1];
      // Empty-mask frames never act as positives.
      if (now.video_id != before.video_id || now.t != before.t + 1 || !now.gt_heatmap ||
          !before.gt_heatmap) {
        continue;
      }
      const size_t j = sample_negative_index(batch, i, negative_seed + i);
      ContrastiveTriple<float> tr;
      tr.anchor = ops::select_batch(out.heatmap, static_cast<int64_t>(i));
      tr.positive = ops::select_batch(out.heatmap, static_cast<int64_t>(i - 1));
      if (config.gt_negatives) {
        std::vector<float> v(b.heatmap.data() + j * hw, b.heatmap.data() + (j + 1) * hw);
        tr.negative = Var<float>::constant(
            Tensor<float>({1, 1, b.heatmap.dim(2), b.heatmap.dim(3)}, std::move(v)));
      } else {
        tr.negative = ops::select_batch(out.heatmap, static_cast<int64_t>(j));
      }
      in.triples.push_back(std::move(tr));
    }
  }
  return total_loss(in, config.weights, static_cast<float>(config.alpha));
}

TrainResult train(const TrainConfig& config, const TrainData& data, const StepCallback& on_step) {
  config.validate();
  resolve_device(config.device);
  if (data.train.empty()) throw ConfigError("no training videos");
  std::set<std::string> distinct;
  for (const auto& v : data.train) distinct.insert(v.video_id);
  if (config.contrastive_enabled() && distinct.size() < 2) {
    throw ConfigError("the contrastive loss needs at least two training videos");
  }
  const std::vector<VideoRecord>& val = data.val.empty() ? data.train : data.val;

  FlaNet<float> model(config.network(), config.seed);
  Adam<float> adam(model.params(), {config.learning_rate});
  Rng sampler(config.seed ^ 0x9e3779b97f4a7c15ull);

  int64_t frames = 0;
  for (const auto& v : data.train) frames += static_cast<int64_t>(v.size());
  const int64_t steps_per_epoch = std::max<int64_t>(1, (frames + config.batch_size - 1) / config.batch_size);

  TrainResult result;
  bool have_best = false;
  int64_t step = 0;
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      ++step;
      const auto batch = sample_training_batch(data.train, config, sampler);
      const Loss<float> loss = batch_loss(model, batch, config, config.seed * 1000003ull + step);
      backward(loss.total);
      adam.step();
      model.params().zero_grad();

      result.steps.push_back({step, epoch, loss.terms});
      if (on_step && !on_step(result.steps.back())) stop = true;
      if (config.max_steps > 0 && step >= config.max_steps) stop = true;
      if (stop) break;
    }

    if (epoch % config.val_interval == 0 || epoch == config.epochs || stop) {
      const double dice = evaluate(model, val, config).frame_weighted.dice;
      result.epochs.push_back({epoch, step, dice});
      if (!have_best || dice > result.best.best_val_dice) {
        have_best = true;
        result.best.config = config;
        result.best.parameters = snapshot_parameters(model.params());
        result.best.optimizer = adam.state();
        result.best.epoch = epoch;
        result.best.step = step;
        result.best.best_val_dice = dice;
      }
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const StepCallback& on_step) {
  if (config.data_root.empty()) throw ConfigError("data_root is not set");
  const DatasetIndex index = index_dataset(config.data_root);
  const SplitAssignment split = split_dataset(index, config.seed);
  TrainData data{load_videos(index, split.train), load_videos(index, split.val)};
  return train(config, data, on_step);
}

FlaNet<float> build_model(const Checkpoint& ckpt) {
  FlaNet<float> model(ckpt.config.network(), ckpt.config.seed);
  restore_parameters(model.params(), ckpt.parameters);
  return model;
}

MetricsReport evaluate(const FlaNet<float>& model, std::span<const VideoRecord> videos,
                       const TrainConfig& config) {
  if (videos.empty()) throw EmptyError("evaluate: empty split");
  NoGradGuard no_grad;
  std::vector<LabeledFrame> frames;
  for (const VideoRecord& video : videos) {
    for (size_t start = 0; start < video.size(); start += kEvalChunk) {
      std::vector<FrameTriplet> chunk;
      for (size_t t = start; t < std::min(video.size(), start + kEvalChunk); ++t) {
        chunk.push_back(sample_triplet(video, static_cast<int>(t), config.input_size, config.sigma));
      }
      const BatchTensors b = make_batch(chunk);
      const NetworkOutput<float> out =
          model.forward(Var<float>::constant(b.current), Var<float>::constant(b.prev1),
                        Var<float>::constant(b.prev2));
      for (size_t i = 0; i < chunk.size(); ++i) {
        const auto k = static_cast<int64_t>(i);
        frames.push_back({video.video_id, frame_metrics(plane(out.prob.value(), k),
                                                        plane(b.mask, k), config.threshold)});
      }
    }
  }
  return aggregate(frames, config_hash(config));
}

MetricsReport evaluate(const Checkpoint& ckpt, std::span<const VideoRecord> videos) {
  const FlaNet<float> model = build_model(ckpt);
  return evaluate(model, videos, ckpt.config);
}

MetricsReport evaluate(const std::filesystem::path& ckpt_path, const std::string& split,
                       const std::string& data_root) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::string root = data_root.empty() ? ckpt.config.data_root : data_root;
  if (root.empty()) throw ConfigError("no dataset root given and none stored in the checkpoint");
  const DatasetIndex index = index_dataset(root);
  const SplitAssignment assignment = split_dataset(index, ckpt.config.seed);
  const std::vector<std::string>* ids = nullptr;
  if (split == "train") ids = &assignment.train;
  else if (split == "val") ids = &assignment.val;
  else if (split == "test") ids = &assignment.test;
  else throw ConfigError("unknown split '" + split + "'");
  if (ids->empty()) throw EmptyError("split '" + split + "' is empty");
  const std::vector<VideoRecord> videos = load_videos(index, *ids);
  return evaluate(ckpt, videos);
}

PredictSummary predict(const Checkpoint& ckpt, const std::filesystem::path& video_dir,
                       const std::filesystem::path& out_dir, bool overlays) {
  const fs::path frames_dir = fs::is_directory(video_dir / "frames") ? video_dir / "frames" : video_dir;
  if (!fs::is_directory(frames_dir)) throw IoError("not a directory: " + frames_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .png frames in " + frames_dir.string());

  std::vector<cv::Mat> frames;
  for (const auto& f : files) {
    cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw IoError("cannot read frame " + f.string());
    frames.push_back(std::move(img));
  }

  const FlaNet<float> model = build_model(ckpt);
  const int size = ckpt.config.input_size;
  for (const char* sub : {"masks", "heatmaps", "overlays"}) {
    if (std::string(sub) == "overlays" && !overlays) continue;
    if (std::string(sub) == "heatmaps" && !ckpt.config.network().use_loc_branch) continue;
    fs::create_directories(out_dir / sub);
  }

  NoGradGuard no_grad;
  PredictSummary summary;
  for (size_t t = 0; t < frames.size(); ++t) {
    const cv::Mat& original = frames[t];
    const cv::Mat cur = resize_frame(original, size);
    const cv::Mat p1 = resize_frame(frames[t >= 1 ? t - 1 : 0], size);
    const cv::Mat p2 = resize_frame(frames[t >= 2 ? t - 2 : 0], size);
    if (p1.size() != cur.size() || p2.size() != cur.size()) {
      throw IoError("frames of " + video_dir.string() + " differ in size");
    }
    Tensor<float> c({1, 3, size, size}), a({1, 3, size, size}), b({1, 3, size, size});
    write_image(cur, 0, c);
    write_image(p1, 0, a);
    write_image(p2, 0, b);
    const NetworkOutput<float> out = model.forward(
        Var<float>::constant(c), Var<float>::constant(a), Var<float>::constant(b));

    const cv::Size native = original.size();
    cv::Mat prob(size, size, CV_32F, const_cast<float*>(out.prob.value().data()));
    cv::Mat prob_native;
    cv::resize(prob, prob_native, native, 0, 0, cv::INTER_LINEAR);
    cv::Mat mask = prob_native >= ckpt.config.threshold;  // 0 / 255

    const std::string name = files[t].filename().string();
    const fs::path mask_path = out_dir / "masks" / name;
    if (!cv::imwrite(mask_path.string(), mask)) throw IoError("cannot write " + mask_path.string());
    summary.masks.push_back(mask_path);

    cv::Mat heat8;
    if (out.heatmap) {
      cv::Mat heat(size, size, CV_32F, const_cast<float*>(out.heatmap.value().data()));
      cv::Mat heat_native;
      cv::resize(heat, heat_native, native, 0, 0, cv::INTER_LINEAR);
      heat_native.convertTo(heat8, CV_8U, 255.0);  // saturates outside [0, 1]
      const fs::path heat_path = out_dir / "heatmaps" / name;
      if (!cv::imwrite(heat_path.string(), heat8)) throw IoError("cannot write " + heat_path.string());
      summary.heatmaps.push_back(heat_path);
    }

    if (overlays) {
      cv::Mat overlay = original.clone();
      cv::Mat tint(native, CV_8UC3, cv::Scalar(0, 0, 255));
      cv::Mat blended;
      cv::addWeighted(original, 0.6, tint, 0.4, 0.0, blended);
      blended.copyTo(overlay, mask);
      std::vector<std::vector<cv::Point>> contours;
      cv::findContours(mask.clone(), contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
      cv::drawContours(overlay, contours, -1, cv::Scalar(0, 255, 255), 1);
      if (!heat8.empty()) {
        cv::Point peak;
        cv::minMaxLoc(heat8, nullptr, nullptr, nullptr, &peak);
        cv::drawMarker(overlay, peak, cv::Scalar(0, 255, 0), cv::MARKER_CROSS, 7, 1);
      }
      const fs::path overlay_path = out_dir / "overlays" / name;
      if (!cv::imwrite(overlay_path.string(), overlay)) {
        throw IoError("cannot write " + overlay_path.string());
      }
      summary.overlays.push_back(overlay_path);
    }
    ++summary.frames;
  }
  return summary;
}

}  // namespace flanet
