#pragma once

#include <array>

#include "unn/rng.hpp"
#include "unn/tensor.hpp"
#include "unn/volume.hpp"

namespace unn {

struct PatchBatch {
  TensorT<float> input;  // [n,1,pd,ph,pw]
  TensorT<float> label;
  std::vector<std::array<std::int64_t, 3>> corners;
};

// Uniformly random corners, the identical crop applied to input and label.
PatchBatch extract_patches(const Volume& input, const Volume& label,
                           const std::array<std::int64_t, 3>& patch_shape, int n_patches,
                           Rng& rng);

// Single crop at a fixed corner (used for validation slabs and oracles).
TensorT<float> crop_patch(const Volume& v, const std::array<std::int64_t, 3>& corner,
                          const std::array<std::int64_t, 3>& patch_shape);

}  // namespace unn
