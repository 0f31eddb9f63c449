#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "flanet/tensor.hpp"

namespace flanet {

namespace fs = std::filesystem;

inline constexpr int kDefaultInputSize = 352;
inline constexpr double kHeatmapSigma = 5.0;

/// Inclusive pixel bounds.
struct BBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Optional clinical labels; carried through, never used for training.
struct VideoLabels {
  std::optional<std::string> bm;  // "benign" | "malignant"
  std::optional<bool> aln;
};

/// Frames are 8-bit BGR (CV_8UC3); masks are CV_8U with values {0, 1}.
struct VideoRecord {
  std::string video_id;
  std::vector<cv::Mat> frames;
  std::vector<cv::Mat> masks;
  std::vector<std::optional<BBox>> bboxes;
  VideoLabels labels;

  size_t size() const { return frames.size(); }
  /// Throws ValidationError when the record breaks its invariants.
  void validate() const;
};

struct Pixel {
  int row = 0, col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Gaussian likelihood map of the lesion center, peak exactly 1 at `center`.
struct Heatmap {
  Tensor<float> values;  // h x w
  Pixel center;
};

struct FrameTriplet {
  cv::Mat current, prev1, prev2;  // resized CV_8UC3
  cv::Mat gt_mask;                // resized CV_8U {0, 1}
  std::optional<Heatmap> gt_heatmap;  // absent for an empty mask
  std::string video_id;
  int t = 0;
  std::array<int, 3> frame_indices{};  // (t, t-1, t-2) after clamping
};

struct VideoEntry {
  std::string video_id;
  fs::path dir;
  std::vector<fs::path> frames;
  std::vector<fs::path> masks;
  VideoLabels labels;
};

struct DatasetIndex {
  fs::path root;
  std::vector<VideoEntry> videos;  // sorted by video_id

  int64_t annotated_frames() const;
  const VideoEntry& find(const std::string& video_id) const;
};

struct SplitAssignment {
  std::vector<std::string> train, val, test;
  uint64_t seed = 0;
};

struct SplitCounts {
  int64_t train = 0, val = 0, test = 0;
};

struct MotionParams {
  double semi_major = 0.0;    // pixels; <= 0 derives 0.18 * image_size
  double semi_minor = 0.0;    // pixels; <= 0 derives 0.13 * image_size
  double speed = 1.2;         // pixels per frame
  double size_jitter = 0.12;  // relative amplitude of the axis oscillation
  double size_period = 14.0;  // frames
  double rotation_speed = 0.03;  // radians per frame
  double contrast = 0.35;        // lesion brightness over background
  double noise = 0.06;           // speckle standard deviation
};

// --------------------------------------------------------------- geometry

/// Tight bounding box of the nonzero pixels, or nullopt for an empty mask.
std::optional<BBox> bbox_of(const cv::Mat& mask);

/// Bounding-box midpoint rounded half-down: (floor((y0+y1)/2), floor((x0+x1)/2)).
Pixel bbox_center(const BBox& box);

/// exp(-((r - r0)^2 + (c - c0)^2) / (2 sigma^2)) over an h x w grid.
Tensor<float> render_gaussian(int height, int width, Pixel center, double sigma);

/// Throws EmptyMaskError for an empty mask and ParamError for sigma <= 0.
Heatmap heatmap_from_mask(const cv::Mat& mask, double sigma = kHeatmapSigma);

// --------------------------------------------------------------- resizing

cv::Mat resize_frame(const cv::Mat& frame, int size);  // bilinear
cv::Mat resize_mask(const cv::Mat& mask, int size);    // nearest

// --------------------------------------------------------------- on-disk data

/// Scans `<root>/<video_id>/{frames,masks}/<index>.png`. Throws IndexError
/// for a frame without its mask and EmptyDatasetError for an empty root.
DatasetIndex index_dataset(const fs::path& root);

/// Loads every frame and mask; masks are binarized with `pixel > 127`.
VideoRecord load_video(const VideoEntry& entry);

/// Writes the record in the layout index_dataset reads.
void write_video(const VideoRecord& video, const fs::path& root);

// --------------------------------------------------------------- splitting

/// Train and test each get 2*ceil(n/5) videos, validation the remainder
/// (at least one). Throws SplitError for fewer than 3 videos.
SplitCounts split_counts(int64_t n_videos);

/// Video-level split, deterministic under `seed`.
SplitAssignment split_dataset(const DatasetIndex& index, uint64_t seed);

// --------------------------------------------------------------- sampling

/// Frames (t, t-1, t-2) clamped at 0, resized to `input_size`, with the
/// heatmap target generated after resizing.
FrameTriplet sample_triplet(const VideoRecord& video, int t, int input_size = kDefaultInputSize,
                            double sigma = kHeatmapSigma);

/// Index of a uniformly chosen batch member from a different video.
/// Throws NegativeSamplingError when no such member exists.
size_t sample_negative_index(std::span<const FrameTriplet> batch, size_t i, uint64_t seed);

const FrameTriplet& sample_negative(std::span<const FrameTriplet> batch, size_t i, uint64_t seed);

// --------------------------------------------------------------- synthetic data

/// Textured background with a moving, size-varying bright ellipse.
VideoRecord generate_synthetic_video(int n_frames, int image_size, const MotionParams& motion,
                                     uint64_t seed, std::string video_id = "synthetic");

/// Writes `n_videos` synthetic videos named video_000, video_001, ...
DatasetIndex generate_synthetic_dataset(const fs::path& root, int n_videos, int n_frames,
                                        int image_size, uint64_t seed,
                                        const MotionParams& motion = {});

}  // namespace flanet
