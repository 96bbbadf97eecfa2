#pragma once

#include <filesystem>
#include <string>

#include "unn/dataset.hpp"
#include "unn/infer.hpp"
#include "unn/models.hpp"
#include "unn/simulate.hpp"
#include "unn/train.hpp"

namespace unn {

// Everything a reproducible run needs, assembled from a sectioned key=value
// config file; command-line flags override single values. Unknown keys are
// rejected.
struct RunConfig {
  // [dataset]
  std::filesystem::path data_dir = "data";
  int n_subjects = 12;
  SplitSpec split;
  double full_counts = 2e6;
  int n_angles = 60;
  int n_bins = 96;
  // [phantom]
  std::array<std::int64_t, 3> grid{32, 64, 64};
  std::array<double, 3> voxel_mm{1.65, 1.65, 1.65};
  double center_jitter = 1.5;
  double intensity_jitter = 0.12;
  // [recon]
  ReconConfig recon;
  // [model]
  std::int64_t base_filters = 32;
  std::int64_t gating_filters = 32;
  std::int64_t fusion_filters = 32;
  std::int64_t se_reduction = 2;
  // [train1] / [train2]
  TrainConfig train1;
  TrainConfig train2;
  // [inference]
  InferenceConfig inference;
  // [output]
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
  std::string snapshot() const;  // effective key=value dump for run metadata

  std::filesystem::path manifest_path() const { return data_dir / "manifest.csv"; }
  std::filesystem::path checkpoint_dir() const { return out_dir / "checkpoints"; }

  DenoiserConfig denoiser_config() const;
  SimConfig sim_config() const;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::filesystem::path& path);

}  // namespace unn
