#include "flanet/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace flanet {

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
  require_same_shape(pred.shape(), gt.shape(), "frame_metrics");
  ConfusionCounts c;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    const T g = gt[i];
    if (g != T(0) && g != T(1)) throw ValidationError("ground-truth mask must be binary");
    const bool p = static_cast<double>(pred[i]) >= threshold;
    if (p && g == T(1)) ++c.tp;
    else if (p) ++c.fp;
    else if (g == T(1)) ++c.fn;
    else ++c.tn;
  }
  return c;
}

FrameMetrics metrics_from_counts(const ConfusionCounts& c, double mae) {
  FrameMetrics m;
  m.mae = mae;
  const int64_t pred_pos = c.tp + c.fp;
  const int64_t gt_pos = c.tp + c.fn;
  if (pred_pos == 0 && gt_pos == 0) {
    m.dice = m.jaccard = m.precision = m.recall = m.f1 = 1.0;
    return m;
  }
  const auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  m.dice = ratio(2.0 * c.tp, static_cast<double>(pred_pos + gt_pos));
  m.jaccard = ratio(c.tp, static_cast<double>(c.tp + c.fp + c.fn));
  m.precision = ratio(c.tp, pred_pos);
  m.recall = ratio(c.tp, gt_pos);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

template <typename T>
FrameMetrics frame_metrics(const Tensor<T>& pred, const Tensor<T>& gt, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParamError("threshold must be in (0, 1)");
  const ConfusionCounts c = confusion(pred, gt, threshold);
  double abs_err = 0.0;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    abs_err += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
  }
  const double mae = gt.numel() > 0 ? abs_err / static_cast<double>(gt.numel()) : 0.0;
  return metrics_from_counts(c, mae);
}

namespace {

struct Accumulator {
  FrameMetrics sum;
  int64_t n = 0;

  void add(const FrameMetrics& m) {
    sum.dice += m.dice;
    sum.jaccard += m.jaccard;
    sum.precision += m.precision;
    sum.recall += m.recall;
    sum.f1 += m.f1;
    sum.mae += m.mae;
    ++n;
  }

  FrameMetrics mean() const {
    const double k = 1.0 / static_cast<double>(n);
    return {sum.dice * k, sum.jaccard * k, sum.precision * k,
            sum.recall * k, sum.f1 * k,      sum.mae * k};
  }
};

nlohmann::json metrics_json(const FrameMetrics& m) {
  return {{"dice", m.dice},         {"jaccard", m.jaccard}, {"precision", m.precision},
          {"recall", m.recall},     {"f1", m.f1},           {"mae", m.mae}};
}

}  // namespace

MetricsReport aggregate(std::span<const LabeledFrame> frames, std::string config_hash) {
  if (frames.empty()) throw EmptyError("aggregate: no frames");
  MetricsReport report;
  report.config_hash = std::move(config_hash);

  Accumulator all;
  std::vector<std::string> order;
  std::map<std::string, Accumulator> per_video;
  for (const auto& f : frames) {
    all.add(f.metrics);
    auto [it, inserted] = per_video.try_emplace(f.video_id);
    if (inserted) order.push_back(f.video_id);
    it->second.add(f.metrics);
  }

  Accumulator videos;
  for (const auto& id : order) {
    const Accumulator& acc = per_video.at(id);
    report.videos.push_back({id, acc.n, acc.mean()});
    videos.add(acc.mean());
  }
  report.frame_weighted = all.mean();
  report.video_weighted = videos.mean();
  report.n_frames = all.n;
  return report;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "video_id,n_frames,dice,jaccard,f1,mae\n";
  const auto row = [&out](const std::string& id, int64_t n, const FrameMetrics& m) {
    out << id << ',' << n << ',' << m.dice << ',' << m.jaccard << ',' << m.f1 << ',' << m.mae
        << '\n';
  };
  for (const auto& v : videos) row(v.video_id, v.n_frames, v.mean);
  row("ALL", n_frames, frame_weighted);
  return out.str();
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_video = nlohmann::json::array();
  for (const auto& v : videos) {
    nlohmann::json entry = metrics_json(v.mean);
    entry["video_id"] = v.video_id;
    entry["n_frames"] = v.n_frames;
    per_video.push_back(std::move(entry));
  }
  return {{"n_frames", n_frames},
          {"config_hash", config_hash},
          {"frame_weighted", metrics_json(frame_weighted)},
          {"video_weighted", metrics_json(video_weighted)},
          {"videos", std::move(per_video)}};
}

template FrameMetrics frame_metrics(const Tensor<float>&, const Tensor<float>&, double);
template FrameMetrics frame_metrics(const Tensor<double>&, const Tensor<double>&, double);
template ConfusionCounts confusion(const Tensor<float>&, const Tensor<float>&, double);
template ConfusionCounts confusion(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace flanet
