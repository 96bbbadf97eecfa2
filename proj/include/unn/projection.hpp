#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "unn/volume.hpp"

namespace unn {

struct ProjectionGeometry {
  int n_angles = 60;
  int n_bins = 96;
  double step_vox = 0.5;  // sampling step along each ray, in voxels

  void validate() const {
    if (n_angles < 1) throw ConfigError("projection: n_angles must be >= 1");
    if (n_bins < 1) throw ConfigError("projection: n_bins must be >= 1");
    if (step_vox <= 0) throw ConfigError("projection: step_vox must be > 0");
  }
};

// Per-slice parallel-beam projections over [0, pi). Values are expected
// counts before Poisson sampling and integer counts afterwards. The target
// grid geometry travels with the sinogram so reconstruction is self-contained.
struct Sinogram {
  std::int64_t n_slices = 0;
  std::int64_t n_angles = 0;
  std::int64_t n_bins = 0;
  std::int64_t img_h = 0, img_w = 0;
  std::array<double, 3> voxel_size_mm{1.0, 1.0, 1.0};
  double step_vox = 0.5;
  std::string subject_id;
  std::vector<double> counts;  // [slice][angle][bin]

  double& at(std::int64_t s, std::int64_t a, std::int64_t b) {
    return counts[(s * n_angles + a) * n_bins + b];
  }
  double at(std::int64_t s, std::int64_t a, std::int64_t b) const {
    return counts[(s * n_angles + a) * n_bins + b];
  }
  double total() const;
};

// Line integrals with bilinear interpolation; linear in the input volume.
Sinogram forward_project(const Volume& v, const ProjectionGeometry& geom);

// Low-level projector pair used by forward_project and OSEM. `angles` selects
// a subset of angle indices out of n_angles_total. They enumerate identical
// (pixel, weight) pairs, so they are exact numerical adjoints of each other.
void project_slices(const double* img, std::int64_t n_slices, std::int64_t h, std::int64_t w,
                    const ProjectionGeometry& geom, const std::vector<int>& angles,
                    double* sino_out);
void backproject_slices(const double* sino, std::int64_t n_slices, std::int64_t h,
                        std::int64_t w, const ProjectionGeometry& geom,
                        const std::vector<int>& angles, double* img_out);

std::vector<int> all_angles(const ProjectionGeometry& geom);

}  // namespace unn
