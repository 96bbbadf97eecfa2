#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "unn/volume.hpp"

namespace unn {

// Shapes are placed in voxel coordinates (d,h,w order, fractional centers
// allowed); later shapes overwrite earlier ones when they overlap.
struct EllipsoidSpec {
  std::array<double, 3> center;     // voxels
  std::array<double, 3> semi_axes;  // voxels
  double intensity = 1.0;
};

struct SphereSpec {
  std::array<double, 3> center;  // voxels
  double radius = 1.0;           // voxels
  double contrast = 1.0;         // value = body intensity * contrast
};

struct PhantomSpec {
  std::array<std::int64_t, 3> grid{32, 64, 64};  // D,H,W
  std::array<double, 3> voxel_size_mm{1.65, 1.65, 1.65};
  std::optional<EllipsoidSpec> body;  // background; spheres scale its intensity
  std::vector<EllipsoidSpec> organs;
  std::vector<SphereSpec> spheres;
  // Per-shape randomization, drawn deterministically from the seed.
  double center_jitter_vox = 0.0;
  double intensity_jitter = 0.0;  // relative, e.g. 0.1 -> *U(0.9, 1.1)
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic rasterization; jittered variants derive solely from the seed.
Volume generate_phantom(const PhantomSpec& spec);

// The default desk-scale template: a body ellipsoid, three organs, two hot
// spheres and one cold sphere, sized for the given grid.
PhantomSpec default_phantom_template(std::array<std::int64_t, 3> grid,
                                     std::array<double, 3> voxel_size_mm);

}  // namespace unn
