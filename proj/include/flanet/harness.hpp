#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flanet/checkpoint.hpp"
#include "flanet/dataset.hpp"
#include "flanet/metrics.hpp"
#include "flanet/network.hpp"

namespace flanet {

struct StepLog {
  int64_t step = 0;
  int epoch = 0;
  LossTerms terms;
};

struct EpochLog {
  int epoch = 0;
  int64_t step = 0;
  double val_dice = 0.0;
};

struct TrainData {
  std::vector<VideoRecord> train;
  std::vector<VideoRecord> val;
};

struct TrainResult {
  Checkpoint best;  // parameters with the highest validation dice
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

/// Called after every optimizer step; return false to stop early.
using StepCallback = std::function<bool(const StepLog&)>;

/// Batch tensors for one training or evaluation step.
struct BatchTensors {
  Tensor<float> current, prev1, prev2;  // n x 3 x S x S
  Tensor<float> mask;                   // n x 1 x S x S, {0, 1}
  Tensor<float> heatmap;                // n x 1 x S x S, zero for empty masks
};

/// Pixel values v in [0, 255] map to v / 255 - 0.5.
Tensor<float> image_to_tensor(const cv::Mat& bgr);
BatchTensors make_batch(std::span<const FrameTriplet> triplets);

/// Draws ceil(batch/2) videos and two consecutive cores (t, t+1) from each.
std::vector<FrameTriplet> sample_training_batch(std::span<const VideoRecord> videos,
                                                const TrainConfig& config, Rng& rng);

/// Loss of one batch; the contrastive term pairs consecutive cores of a video
/// and draws negatives from other videos in the batch.
Loss<float> batch_loss(const FlaNet<float>& model, std::span<const FrameTriplet> batch,
                       const TrainConfig& config, uint64_t negative_seed);

TrainResult train(const TrainConfig& config, const TrainData& data,
                  const StepCallback& on_step = {});

/// Indexes config.data_root, splits it with config.seed and trains on the
/// train split, validating on the val split.
TrainResult train(const TrainConfig& config, const StepCallback& on_step = {});

FlaNet<float> build_model(const Checkpoint& ckpt);

MetricsReport evaluate(const FlaNet<float>& model, std::span<const VideoRecord> videos,
                       const TrainConfig& config);
MetricsReport evaluate(const Checkpoint& ckpt, std::span<const VideoRecord> videos);
/// Loads the checkpoint and the named split ("train" | "val" | "test") of
/// `data_root` (defaults to the checkpoint's data_root).
MetricsReport evaluate(const std::filesystem::path& ckpt_path, const std::string& split,
                       const std::string& data_root = {});

struct PredictSummary {
  int frames = 0;
  std::vector<std::filesystem::path> masks, heatmaps, overlays;
};

/// Reads an ordered frame sequence (`<video>/frames/*.png` or `<video>/*.png`)
/// and writes masks/, heatmaps/ and overlays/ under `out_dir`.
PredictSummary predict(const Checkpoint& ckpt, const std::filesystem::path& video_dir,
                       const std::filesystem::path& out_dir, bool overlays = true);

}  // namespace flanet
