#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flanet/config.hpp"
#include "flanet/optim.hpp"

namespace flanet {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Everything needed to rebuild, evaluate or resume a model.
///
/// On-disk layout (little-endian):
///   "FLANETCK" | u32 version
///   u64 n | config text (format_config)
///   i64 epoch | i64 step | f64 best_val_dice
///   u32 n_params, then per parameter:
///     u32 n | name | u32 rank | i64 dims[rank] | f32 data[numel]
///   u8 has_optimizer; if set: i64 adam_step, then per parameter in the same
///     order f32 first_moment[numel] and f32 second_moment[numel]
struct Checkpoint {
  TrainConfig config;
  std::vector<NamedTensor> parameters;
  std::optional<AdamState<float>> optimizer;
  int64_t epoch = 0;
  int64_t step = 0;
  double best_val_dice = 0.0;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError for a missing or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> snapshot_parameters(const ParamStore<float>& params);
/// Copies values by name; every store parameter must be present with a matching shape.
void restore_parameters(ParamStore<float>& params, const std::vector<NamedTensor>& values);

}  // namespace flanet
