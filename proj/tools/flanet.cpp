#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flanet/harness.hpp"

namespace fs = std::filesystem;
using namespace flanet;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

int run_train(const std::string& config_path, bool no_ffa, bool no_loc, bool no_contrastive,
              std::optional<uint64_t> seed, const std::string& data, const std::string& out) {
  TrainConfig config = load_config(config_path);
  config.no_ffa |= no_ffa;
  config.no_loc_branch |= no_loc;
  config.no_contrastive |= no_contrastive;
  if (seed) config.seed = *seed;
  if (!data.empty()) config.data_root = data;
  if (!out.empty()) config.output_dir = out;

  const fs::path out_dir = config.output_dir;
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.csv");
  log << "step,epoch,contrastive,mse_heatmap,bce,iou,total\n";
  const TrainResult result = train(config, [&](const StepLog& s) {
    const LossTerms& t = s.terms;
    log << s.step << ',' << s.epoch << ',' << t.contrastive << ',' << t.mse_heatmap << ','
        << t.bce << ',' << t.iou << ',' << t.total << '\n';
    std::printf("step %lld epoch %d loss %.6f\n", static_cast<long long>(s.step), s.epoch, t.total);
    return true;
  });
  for (const EpochLog& e : result.epochs) {
    std::printf("epoch %d step %lld val_dice %.6f\n", e.epoch, static_cast<long long>(e.step),
                e.val_dice);
  }
  const fs::path ckpt = out_dir / "best.ckpt";
  save_checkpoint(result.best, ckpt);
  std::printf("best val dice %.6f at epoch %lld -> %s\n", result.best.best_val_dice,
              static_cast<long long>(result.best.epoch), ckpt.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& split, const std::string& data,
             const std::string& out) {
  const MetricsReport report = evaluate(ckpt, split, data);
  std::cout << report.to_csv();
  if (!out.empty()) {
    write_text(fs::path(out) / ("metrics_" + split + ".csv"), report.to_csv());
    write_text(fs::path(out) / ("metrics_" + split + ".json"), report.to_json().dump(2) + "\n");
  }
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& video, const std::string& out,
                bool no_overlays) {
  const PredictSummary s = predict(load_checkpoint(ckpt), video, out, !no_overlays);
  std::printf("%d frames: %zu masks, %zu heatmaps, %zu overlays -> %s\n", s.frames,
              s.masks.size(), s.heatmaps.size(), s.overlays.size(), out.c_str());
  return 0;
}

int run_synth(const std::string& out, int videos, int frames, uint64_t seed, int size) {
  const DatasetIndex index = generate_synthetic_dataset(out, videos, frames, size, seed);
  std::printf("wrote %zu videos (%lld annotated frames) to %s\n", index.videos.size(),
              static_cast<long long>(index.annotated_frames()), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flanet: temporal lesion segmentation for ultrasound video"};
  app.require_subcommand(1);

  std::string config_path, data, out;
  bool no_ffa = false, no_loc = false, no_contrastive = false;
  std::optional<uint64_t> seed;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best-val-dice checkpoint");
  train_cmd->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_flag("--no-ffa", no_ffa, "Replace the spectral fusion block with concat + 1x1 conv");
  train_cmd->add_flag("--no-loc-branch", no_loc, "Drop the localization branch");
  train_cmd->add_flag("--no-contrastive", no_contrastive, "Drop the contrastive loss term");
  train_cmd->add_option("--seed", seed, "Override the config seed");
  train_cmd->add_option("--data", data, "Override data_root");
  train_cmd->add_option("--out", out, "Override output_dir");

  std::string ckpt, split;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--split", split, "Split to evaluate")->required()->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--data", data, "Dataset root (default: the checkpoint's data_root)");
  eval_cmd->add_option("--out", out, "Directory for metrics CSV and JSON");

  std::string video;
  bool no_overlays = false;
  auto* predict_cmd = app.add_subcommand("predict", "Write masks, heatmaps and overlays for a video");
  predict_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  predict_cmd->add_option("--video", video, "Video directory")->required()->check(CLI::ExistingDirectory);
  predict_cmd->add_option("--out", out, "Output directory")->required();
  predict_cmd->add_flag("--no-overlays", no_overlays, "Skip overlay images");

  int n_videos = 0, n_frames = 0, size = 64;
  uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", out, "Dataset root")->required();
  synth_cmd->add_option("--videos", n_videos, "Number of videos")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", n_frames, "Frames per video")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->required();
  synth_cmd->add_option("--size", size, "Frame side length in pixels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(config_path, no_ffa, no_loc, no_contrastive, seed, data, out);
    if (*eval_cmd) return run_eval(ckpt, split, data, out);
    if (*predict_cmd) return run_predict(ckpt, video, out, no_overlays);
    if (*synth_cmd) return run_synth(out, n_videos, n_frames, synth_seed, size);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
