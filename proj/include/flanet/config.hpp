#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "flanet/losses.hpp"
#include "flanet/network.hpp"

namespace flanet {

/// Training hyperparameters, ablation switches and paths. Defaults are the
/// published settings; desk() gives the small CPU configuration.
struct TrainConfig {
  double learning_rate = 5e-5;
  int epochs = 100;
  int batch_size = 24;
  int input_size = 352;
  double sigma = 5.0;
  double alpha = 1.0;
  LossWeights weights;
  bool no_ffa = false;
  bool no_loc_branch = false;
  bool no_contrastive = false;
  bool gt_negatives = false;  // use ground-truth heatmaps as N_t
  uint64_t seed = 0;
  ChannelSchedule encoder_channels{32, 64, 128, 256};
  ChannelSchedule decoder_channels{0, 0, 0, 0};
  int norm_groups = 8;
  int max_steps = 0;     // 0: run all epochs
  int val_interval = 1;  // epochs between validations
  double threshold = 0.5;
  std::string data_root;
  std::string output_dir = "runs/flanet";
  std::string device = "cpu";

  static TrainConfig desk();

  NetworkConfig network() const;
  bool contrastive_enabled() const { return !no_contrastive && !no_loc_branch; }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Flat `key = value` text; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_config(std::string_view text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& config);
/// Hex FNV-1a digest of format_config().
std::string config_hash(const TrainConfig& config);

/// Resolves FLANET_DEVICE (default "cpu"); only the CPU backend exists.
std::string resolve_device(const std::string& configured);

}  // namespace flanet
