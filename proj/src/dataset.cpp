#include "flanet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace flanet {

void VideoRecord::validate() const {
  if (frames.size() != masks.size() || frames.size() != bboxes.size()) {
    throw ValidationError(video_id + ": frames, masks and bboxes differ in length");
  }
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].size() != masks[i].size()) {
      throw ValidationError(video_id + ": frame " + std::to_string(i) +
                            " and its mask differ in size");
    }
    if (frames[i].type() != CV_8UC3 || masks[i].type() != CV_8U) {
      throw ValidationError(video_id + ": unexpected pixel format at frame " + std::to_string(i));
    }
    if (bboxes[i] != bbox_of(masks[i])) {
      throw ValidationError(video_id + ": stale bbox at frame " + std::to_string(i));
    }
  }
}

// --------------------------------------------------------------- geometry

std::optional<BBox> bbox_of(const cv::Mat& mask) {
  CV_Assert(mask.type() == CV_8U);
  BBox box{mask.cols, mask.rows, -1, -1};
  for (int r = 0; r < mask.rows; ++r) {
    const uint8_t* row = mask.ptr<uint8_t>(r);
    for (int c = 0; c < mask.cols; ++c) {
      if (!row[c]) continue;
      box.x_min = std::min(box.x_min, c);
      box.x_max = std::max(box.x_max, c);
      box.y_min = std::min(box.y_min, r);
      box.y_max = std::max(box.y_max, r);
    }
  }
  if (box.x_max < 0) return std::nullopt;
  return box;
}

Pixel bbox_center(const BBox& box) {
  // Coordinates are non-negative, so integer division is floor: ties round down.
  return {(box.y_min + box.y_max) / 2, (box.x_min + box.x_max) / 2};
}

Tensor<float> render_gaussian(int height, int width, Pixel center, double sigma) {
  if (!(sigma > 0.0)) throw ParamError("heatmap sigma must be > 0");
  Tensor<float> values({height, width});
  const double denom = 2.0 * sigma * sigma;
  for (int r = 0; r < height; ++r) {
    const double dr = r - center.row;
    for (int c = 0; c < width; ++c) {
      const double dc = c - center.col;
      values[static_cast<int64_t>(r) * width + c] =
          static_cast<float>(std::exp(-(dr * dr + dc * dc) / denom));
    }
  }
  return values;
}

Heatmap heatmap_from_mask(const cv::Mat& mask, double sigma) {
  if (!(sigma > 0.0)) throw ParamError("heatmap sigma must be > 0");
  const auto box = bbox_of(mask);
  if (!box) throw EmptyMaskError("heatmap_from_mask: mask has no foreground");
  const Pixel center = bbox_center(*box);
  return {render_gaussian(mask.rows, mask.cols, center, sigma), center};
}

// --------------------------------------------------------------- resizing

cv::Mat resize_frame(const cv::Mat& frame, int size) {
  if (frame.rows == size && frame.cols == size) return frame;
  cv::Mat out;
  cv::resize(frame, out, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  return out;
}

cv::Mat resize_mask(const cv::Mat& mask, int size) {
  if (mask.rows == size && mask.cols == size) return mask;
  cv::Mat out;
  cv::resize(mask, out, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  return out;
}

// --------------------------------------------------------------- on-disk data

namespace {

std::optional<int> frame_number(const fs::path& file) {
  const std::string stem = file.stem().string();
  int value = 0;
  auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), value);
  if (ec != std::errc() || ptr != stem.data() + stem.size() || value < 0) return std::nullopt;
  return value;
}

std::string frame_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu.png", index);
  return buf;
}

VideoLabels read_labels(const fs::path& meta) {
  VideoLabels labels;
  if (!fs::exists(meta)) return labels;
  std::ifstream in(meta);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IndexError("malformed " + meta.string() + ": " + e.what());
  }
  if (j.contains("bm")) {
    const std::string bm = j.at("bm").get<std::string>();
    if (bm != "benign" && bm != "malignant") {
      throw IndexError(meta.string() + ": bm must be \"benign\" or \"malignant\"");
    }
    labels.bm = bm;
  }
  if (j.contains("aln")) labels.aln = j.at("aln").get<bool>();
  return labels;
}

}  // namespace

int64_t DatasetIndex::annotated_frames() const {
  int64_t total = 0;
  for (const auto& v : videos) total += static_cast<int64_t>(v.frames.size());
  return total;
}

const VideoEntry& DatasetIndex::find(const std::string& video_id) const {
  for (const auto& v : videos) {
    if (v.video_id == video_id) return v;
  }
  throw IndexError("unknown video id: " + video_id);
}

DatasetIndex index_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw EmptyDatasetError("dataset root not found: " + root.string());
  DatasetIndex index;
  index.root = root;

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "frames")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    VideoEntry video;
    video.video_id = dir.filename().string();
    video.dir = dir;

    std::vector<std::pair<int, fs::path>> numbered;
    for (const auto& f : fs::directory_iterator(dir / "frames")) {
      if (f.path().extension() != ".png") continue;
      const auto n = frame_number(f.path());
      if (!n) throw IndexError("frame name is not an integer: " + f.path().string());
      numbered.emplace_back(*n, f.path());
    }
    std::sort(numbered.begin(), numbered.end());
    for (size_t i = 0; i < numbered.size(); ++i) {
      const auto& [n, path] = numbered[i];
      if (n != static_cast<int>(i)) {
        throw IndexError("frame indices of " + video.video_id +
                         " are not consecutive from 0 at " + path.string());
      }
      const fs::path mask = dir / "masks" / path.filename();
      if (!fs::exists(mask)) throw IndexError("missing mask for frame " + path.string());
      video.frames.push_back(path);
      video.masks.push_back(mask);
    }
    if (video.frames.empty()) continue;
    video.labels = read_labels(dir / "meta.json");
    index.videos.push_back(std::move(video));
  }
  if (index.videos.empty()) throw EmptyDatasetError("no videos under " + root.string());
  return index;
}

VideoRecord load_video(const VideoEntry& entry) {
  VideoRecord video;
  video.video_id = entry.video_id;
  video.labels = entry.labels;
  for (size_t i = 0; i < entry.frames.size(); ++i) {
    cv::Mat frame = cv::imread(entry.frames[i].string(), cv::IMREAD_COLOR);
    if (frame.empty()) throw IoError("cannot read frame " + entry.frames[i].string());
    cv::Mat raw = cv::imread(entry.masks[i].string(), cv::IMREAD_GRAYSCALE);
    if (raw.empty()) throw IoError("cannot read mask " + entry.masks[i].string());
    if (raw.size() != frame.size()) {
      throw ValidationError("mask size differs from frame: " + entry.masks[i].string());
    }
    cv::Mat mask;
    cv::threshold(raw, mask, 127, 1, cv::THRESH_BINARY);
    video.bboxes.push_back(bbox_of(mask));
    video.frames.push_back(std::move(frame));
    video.masks.push_back(std::move(mask));
  }
  return video;
}

void write_video(const VideoRecord& video, const fs::path& root) {
  video.validate();
  const fs::path dir = root / video.video_id;
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "masks");
  for (size_t i = 0; i < video.size(); ++i) {
    const std::string name = frame_name(i);
    if (!cv::imwrite((dir / "frames" / name).string(), video.frames[i])) {
      throw IoError("cannot write frame under " + dir.string());
    }
    cv::Mat mask = video.masks[i] * 255;
    if (!cv::imwrite((dir / "masks" / name).string(), mask)) {
      throw IoError("cannot write mask under " + dir.string());
    }
  }
  if (video.labels.bm || video.labels.aln) {
    nlohmann::json meta = nlohmann::json::object();
    if (video.labels.bm) meta["bm"] = *video.labels.bm;
    if (video.labels.aln) meta["aln"] = *video.labels.aln;
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
  }
}

// --------------------------------------------------------------- splitting

SplitCounts split_counts(int64_t n) {
  if (n < 3) throw SplitError("need at least 3 videos to split, got " + std::to_string(n));
  SplitCounts c;
  c.train = c.test = 2 * ((n + 4) / 5);
  c.val = n - c.train - c.test;
  while (c.val < 1) {
    if (c.test >= c.train) --c.test;
    else --c.train;
    ++c.val;
  }
  return c;
}

SplitAssignment split_dataset(const DatasetIndex& index, uint64_t seed) {
  const SplitCounts counts = split_counts(static_cast<int64_t>(index.videos.size()));
  std::vector<std::string> ids;
  for (const auto& v : index.videos) ids.push_back(v.video_id);
  std::sort(ids.begin(), ids.end());

  // Fisher-Yates on raw engine output, stable across standard libraries.
  std::mt19937_64 rng(seed);
  for (size_t i = ids.size() - 1; i > 0; --i) {
    std::swap(ids[i], ids[rng() % (i + 1)]);
  }

  SplitAssignment split;
  split.seed = seed;
  const auto train_end = ids.begin() + counts.train;
  const auto val_end = train_end + counts.val;
  split.train.assign(ids.begin(), train_end);
  split.val.assign(train_end, val_end);
  split.test.assign(val_end, ids.end());
  return split;
}

// --------------------------------------------------------------- sampling

FrameTriplet sample_triplet(const VideoRecord& video, int t, int input_size, double sigma) {
  if (t < 0 || t >= static_cast<int>(video.size())) {
    throw IndexError("frame index " + std::to_string(t) + " out of range for " +
                     video.video_id + " (" + std::to_string(video.size()) + " frames)");
  }
  FrameTriplet out;
  out.video_id = video.video_id;
  out.t = t;
  out.frame_indices = {t, std::max(t - 1, 0), std::max(t - 2, 0)};
  out.current = resize_frame(video.frames[static_cast<size_t>(out.frame_indices[0])], input_size);
  out.prev1 = resize_frame(video.frames[static_cast<size_t>(out.frame_indices[1])], input_size);
  out.prev2 = resize_frame(video.frames[static_cast<size_t>(out.frame_indices[2])], input_size);
  out.gt_mask = resize_mask(video.masks[static_cast<size_t>(t)], input_size);
  if (bbox_of(out.gt_mask)) out.gt_heatmap = heatmap_from_mask(out.gt_mask, sigma);
  return out;
}

size_t sample_negative_index(std::span<const FrameTriplet> batch, size_t i, uint64_t seed) {
  if (i >= batch.size()) throw IndexError("sample_negative: index out of range");
  std::vector<size_t> candidates;
  for (size_t j = 0; j < batch.size(); ++j) {
    if (batch[j].video_id != batch[i].video_id) candidates.push_back(j);
  }
  if (candidates.empty()) {
    throw NegativeSamplingError("batch holds no frame from a video other than " +
                                batch[i].video_id);
  }
  std::mt19937_64 rng(seed);
  return candidates[rng() % candidates.size()];
}

const FrameTriplet& sample_negative(std::span<const FrameTriplet> batch, size_t i,
                                    uint64_t seed) {
  return batch[sample_negative_index(batch, i, seed)];
}

// --------------------------------------------------------------- synthetic data

VideoRecord generate_synthetic_video(int n_frames, int image_size, const MotionParams& motion,
                                     uint64_t seed, std::string video_id) {
  if (n_frames < 3) throw ParamError("synthetic video needs at least 3 frames");
  if (image_size < 16) throw ParamError("synthetic image size must be >= 16");
  const double a0 = motion.semi_major > 0 ? motion.semi_major : 0.18 * image_size;
  const double b0 = motion.semi_minor > 0 ? motion.semi_minor : 0.13 * image_size;
  if (motion.semi_major < 0 || motion.semi_minor < 0 || a0 < 2.0 || b0 < 2.0) {
    throw ParamError("degenerate lesion: ellipse axes must be >= 2 px");
  }
  if (motion.size_jitter < 0 || motion.size_jitter >= 0.5 || motion.size_period <= 0) {
    throw ParamError("size_jitter must be in [0, 0.5) and size_period > 0");
  }
  if (a0 * (1.0 - motion.size_jitter) < 2.0 || b0 * (1.0 - motion.size_jitter) < 2.0) {
    throw ParamError("degenerate lesion: oscillating axes drop below 2 px");
  }
  const double reach = std::max(a0, b0) * (1.0 + motion.size_jitter);
  const double margin = reach + 2.0;
  const double lo = margin;
  const double hi = image_size - 1 - margin;
  if (hi <= lo) throw ParamError("lesion does not fit inside the image");

  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  double cy = lo + unit(rng) * (hi - lo);
  double cx = lo + unit(rng) * (hi - lo);
  const double heading = unit(rng) * kTwoPi;
  double vy = motion.speed * std::sin(heading);
  double vx = motion.speed * std::cos(heading);
  const double phase_a = unit(rng) * kTwoPi;
  const double phase_b = unit(rng) * kTwoPi;
  const double theta0 = unit(rng) * kTwoPi;

  // Low-frequency background texture, drifting slowly over time.
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, 3> waves;
  for (auto& w : waves) {
    w = {1.0 + 3.0 * unit(rng), 1.0 + 3.0 * unit(rng), unit(rng) * kTwoPi, 0.03 + 0.05 * unit(rng)};
  }
  const double base = 0.25 + 0.1 * unit(rng);

  VideoRecord video;
  video.video_id = std::move(video_id);
  for (int t = 0; t < n_frames; ++t) {
    const double a =
        a0 * (1.0 + motion.size_jitter * std::sin(kTwoPi * t / motion.size_period + phase_a));
    const double b =
        b0 * (1.0 + motion.size_jitter * std::sin(kTwoPi * t / motion.size_period + phase_b));
    const double theta = theta0 + motion.rotation_speed * t;
    const double ct = std::cos(theta), st = std::sin(theta);

    cv::Mat gray(image_size, image_size, CV_8U);
    cv::Mat mask(image_size, image_size, CV_8U, cv::Scalar(0));
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        double v = base;
        for (const auto& w : waves) {
          v += w.amp * std::sin(kTwoPi * (w.fy * r + w.fx * c) / image_size + w.phase + 0.05 * t);
        }
        const double dy = r - cy, dx = c - cx;
        const double u = (dx * ct + dy * st) / a;
        const double q = (-dx * st + dy * ct) / b;
        const double rho = u * u + q * q;
        if (rho <= 1.0) {
          mask.at<uint8_t>(r, c) = 1;
          v += motion.contrast * (1.0 - 0.3 * rho);
        }
        v += motion.noise * noise(rng);
        gray.at<uint8_t>(r, c) = cv::saturate_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
    cv::Mat frame;
    cv::cvtColor(gray, frame, cv::COLOR_GRAY2BGR);
    video.bboxes.push_back(bbox_of(mask));
    video.frames.push_back(std::move(frame));
    video.masks.push_back(std::move(mask));

    cy += vy;
    cx += vx;
    if (cy < lo || cy > hi) {
      vy = -vy;
      cy = std::clamp(cy, lo, hi);
    }
    if (cx < lo || cx > hi) {
      vx = -vx;
      cx = std::clamp(cx, lo, hi);
    }
  }
  return video;
}

DatasetIndex generate_synthetic_dataset(const fs::path& root, int n_videos, int n_frames,
                                        int image_size, uint64_t seed,
                                        const MotionParams& motion) {
  if (n_videos < 1) throw ParamError("need at least one synthetic video");
  std::mt19937_64 seeds(seed);
  for (int v = 0; v < n_videos; ++v) {
    char id[32];
    std::snprintf(id, sizeof(id), "video_%03d", v);
    write_video(generate_synthetic_video(n_frames, image_size, motion, seeds(), id), root);
  }
  return index_dataset(root);
}

}  // namespace flanet
