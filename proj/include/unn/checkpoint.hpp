#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unn/models.hpp"

namespace unn {

struct CheckpointMeta {
  int stage = 0;
  double count_level = 0.0;  // stage-1 denoisers only
  std::int64_t step = 0;
  double val_metric = 0.0;
};

// Optional training-state payload stored in "last" checkpoints so --resume
// reproduces an uninterrupted run exactly: optimizer moments, sampler RNG,
// step counter and best-validation bookkeeping.
struct TrainState {
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  std::string rng_state;
  std::int64_t adam_step = 0;
  double best_metric = 0.0;
  std::int64_t best_step = -1;
  std::int64_t evals_since_best = 0;
  bool has_best = false;
};

void save_denoiser_checkpoint(const std::filesystem::path& path,
                              const DenoiserModel<float>& model, const CheckpointMeta& meta,
                              const TrainState* train_state = nullptr);

DenoiserModel<float> load_denoiser_checkpoint(const std::filesystem::path& path,
                                              CheckpointMeta* meta = nullptr,
                                              TrainState* train_state = nullptr);

void save_unn_checkpoint(const std::filesystem::path& path, const UnnModel<float>& model,
                         const CheckpointMeta& meta, const TrainState* train_state = nullptr);

UnnModel<float> load_unn_checkpoint(const std::filesystem::path& path,
                                    CheckpointMeta* meta = nullptr,
                                    TrainState* train_state = nullptr);

// Loads a stage-1 checkpoint and verifies its architecture fingerprint against
// the expected config; mismatch is a hard error.
DenoiserModel<float> load_denoiser_for_assembly(const std::filesystem::path& path,
                                                const DenoiserConfig& expected,
                                                double expected_level);

// Peek at the denoiser config stored in a checkpoint without loading weights.
DenoiserConfig peek_denoiser_config(const std::filesystem::path& path,
                                    CheckpointMeta* meta = nullptr);

}  // namespace unn
