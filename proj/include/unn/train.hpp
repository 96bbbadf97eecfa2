#pragma once

#include <array>
#include <filesystem>

#include "unn/checkpoint.hpp"
#include "unn/dataset.hpp"
#include "unn/infer.hpp"
#include "unn/losses.hpp"
#include "unn/models.hpp"

namespace unn {

struct TrainConfig {
  int stage = 1;
  double count_level = 0.01;  // stage 1 only
  int batch_size = 15;        // stage 2 runs with 1
  std::array<std::int64_t, 3> patch_shape{20, 64, 64};  // stage 2 uses depth + full in-plane
  double learning_rate = 1e-4;
  std::int64_t max_steps = 400;
  int eval_every = 25;
  int patience = 8;  // evaluations without improvement before stopping
  std::uint64_t seed = 0;
  double lambda_a = 0.6;
  int val_slabs_per_subject = 2;

  void validate() const;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path curve_csv;
  double best_val_metric = 0.0;  // validation SSIM
  std::int64_t best_step = -1;
  std::int64_t steps_run = 0;
  // Stage 2 only: validation loss of the trained gate vs the fixed
  // uniform-weight baseline on the same data.
  double final_val_loss = 0.0;
  double uniform_baseline_val_loss = 0.0;
};

// Trains one denoiser on (count_level, label) pairs from the train split,
// tracking validation SSIM on fixed slabs; returns the best checkpoint.
TrainResult train_stage1(const DatasetManifest& manifest, const SplitSpec& split,
                         const DenoiserConfig& arch, const TrainConfig& cfg,
                         const std::filesystem::path& ckpt_dir, bool resume = false);

// Trains gating + fusion on top of six frozen stage-1 denoisers.
TrainResult train_stage2(const DatasetManifest& manifest, const SplitSpec& split,
                         const std::array<std::filesystem::path, 6>& denoiser_checkpoints,
                         std::int64_t gating_filters, std::int64_t fusion_filters,
                         const TrainConfig& cfg, const std::filesystem::path& ckpt_dir,
                         bool resume = false);

std::filesystem::path stage1_checkpoint_name(const std::filesystem::path& dir, double level,
                                             bool best);
std::filesystem::path stage2_checkpoint_name(const std::filesystem::path& dir, bool best);

}  // namespace unn
