#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flanet/tensor.hpp"

namespace flanet {

struct ConfusionCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct FrameMetrics {
  double dice = 0, jaccard = 0, precision = 0, recall = 0, f1 = 0, mae = 0;
};

/// Binarizes `pred` with `pred >= threshold` and scores it against a {0,1}
/// mask. MAE is taken on the soft map. When prediction and ground truth are
/// both empty, dice = jaccard = precision = recall = f1 = 1.
template <typename T>
FrameMetrics frame_metrics(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 0.5);

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold = 0.5);

FrameMetrics metrics_from_counts(const ConfusionCounts& c, double mae);

struct LabeledFrame {
  std::string video_id;
  FrameMetrics metrics;
};

struct VideoMetrics {
  std::string video_id;
  int64_t n_frames = 0;
  FrameMetrics mean;
};

struct MetricsReport {
  std::vector<VideoMetrics> videos;  // in first-seen order
  FrameMetrics frame_weighted;       // dataset mean over frames
  FrameMetrics video_weighted;       // mean of per-video means
  int64_t n_frames = 0;
  std::string config_hash;

  /// Columns: video_id,n_frames,dice,jaccard,f1,mae; a final "ALL" row holds
  /// the frame-weighted dataset mean.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Throws EmptyError for an empty input.
MetricsReport aggregate(std::span<const LabeledFrame> frames, std::string config_hash = {});

extern template FrameMetrics frame_metrics(const Tensor<float>&, const Tensor<float>&, double);
extern template FrameMetrics frame_metrics(const Tensor<double>&, const Tensor<double>&, double);
extern template ConfusionCounts confusion(const Tensor<float>&, const Tensor<float>&, double);
extern template ConfusionCounts confusion(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace flanet
