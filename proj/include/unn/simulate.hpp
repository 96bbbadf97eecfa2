#pragma once

#include <functional>

#include "unn/dataset.hpp"
#include "unn/phantom.hpp"
#include "unn/projection.hpp"
#include "unn/rng.hpp"

namespace unn {

struct ReconConfig {
  int iterations = 6;
  int subsets = 5;
  double postfilter_fwhm_mm = 5.0;

  void validate(int n_angles) const {
    if (iterations < 1) throw ConfigError("recon: iterations must be >= 1");
    if (subsets < 1) throw ConfigError("recon: subsets must be >= 1");
    if (n_angles % subsets != 0)
      throw ConfigError("recon: subsets (" + std::to_string(subsets) +
                        ") must divide the angle count (" + std::to_string(n_angles) + ")");
  }
};

// Scales the expected sinogram so its mass matches total_counts_target, then
// draws independent Poisson counts per bin. applied_scale (when given)
// receives the scale factor used, for count-rate normalization downstream.
Sinogram poisson_sample(const Sinogram& expected, double total_counts_target, Rng& rng,
                        double* applied_scale = nullptr);

// Binomial thinning: each integer bin count n becomes Binomial(n, f) — the
// statistical equivalent of uniformly subsampling listmode events.
Sinogram thin_counts(const Sinogram& full, double fraction, Rng& rng);

// Called after every ordered-subset sub-update with (iteration, subset, image).
using OsemObserver =
    std::function<void(int iteration, int subset, const std::vector<double>& image)>;

// Ordered-subset EM with multiplicative updates, uniform positive start and
// a Gaussian post-filter, per ReconConfig.
Volume osem_reconstruct(const Sinogram& s, const ReconConfig& cfg,
                        const OsemObserver& observer = {});

Volume gaussian_postfilter(const Volume& v, double fwhm_mm);
double fwhm_to_sigma_vox(double fwhm_mm, double voxel_size_mm);

struct SimConfig {
  int n_subjects = 12;
  PhantomSpec phantom;  // per-subject templates differ only by seed
  ProjectionGeometry geometry;
  ReconConfig recon;
  double full_counts = 2e6;  // total counts at the 100% level
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  int jobs = 1;
};

// Count levels written per subject: the full-count label plus the six inputs.
inline constexpr std::array<double, 7> kDatasetLevels = {1.0,  0.50, 0.25, 0.10,
                                                         0.05, 0.02, 0.01};

// Generates phantom -> projection -> Poisson counts -> per-level thinning ->
// OSEM -> post-filter for every subject, writes volumes and the manifest
// (manifest.csv in out_dir), and returns the manifest. Reconstructions are
// divided by (sinogram scale * fraction) so every level shares the phantom's
// intensity scale.
DatasetManifest build_dataset(const SimConfig& cfg);

}  // namespace unn
