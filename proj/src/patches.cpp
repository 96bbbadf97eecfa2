#include "unn/patches.hpp"

namespace unn {

TensorT<float> crop_patch(const Volume& v, const std::array<std::int64_t, 3>& corner,
                          const std::array<std::int64_t, 3>& patch_shape) {
  for (int a = 0; a < 3; ++a)
    if (corner[a] < 0 || corner[a] + patch_shape[a] > v.dims[a])
      throw ShapeError("crop_patch: patch leaves the volume on axis " + std::to_string(a));
  TensorT<float> t({1, 1, patch_shape[0], patch_shape[1], patch_shape[2]});
  float* dst = t.raw();
  for (std::int64_t d = 0; d < patch_shape[0]; ++d)
    for (std::int64_t h = 0; h < patch_shape[1]; ++h) {
      const float* src = &v.data[((corner[0] + d) * v.dims[1] + corner[1] + h) * v.dims[2] +
                                 corner[2]];
      std::copy(src, src + patch_shape[2], dst);
      dst += patch_shape[2];
    }
  return t;
}

PatchBatch extract_patches(const Volume& input, const Volume& label,
                           const std::array<std::int64_t, 3>& patch_shape, int n_patches,
                           Rng& rng) {
  if (input.dims != label.dims)
    throw ShapeError("extract_patches: input and label volumes differ in shape");
  for (int a = 0; a < 3; ++a)
    if (patch_shape[a] < 1 || patch_shape[a] > input.dims[a])
      throw ShapeError("extract_patches: patch extent " + std::to_string(patch_shape[a]) +
                       " does not fit volume extent " + std::to_string(input.dims[a]) +
                       " on axis " + std::to_string(a));
  if (n_patches < 1) throw UsageError("extract_patches: n_patches must be >= 1");

  PatchBatch batch;
  batch.input = TensorT<float>(
      {n_patches, 1, patch_shape[0], patch_shape[1], patch_shape[2]});
  batch.label = TensorT<float>(
      {n_patches, 1, patch_shape[0], patch_shape[1], patch_shape[2]});
  const std::int64_t patch_elems = patch_shape[0] * patch_shape[1] * patch_shape[2];
  for (int p = 0; p < n_patches; ++p) {
    std::array<std::int64_t, 3> corner;
    for (int a = 0; a < 3; ++a)
      corner[a] = static_cast<std::int64_t>(
          rng.uniform_index(static_cast<std::uint64_t>(input.dims[a] - patch_shape[a] + 1)));
    batch.corners.push_back(corner);
    TensorT<float> pi = crop_patch(input, corner, patch_shape);
    TensorT<float> pl = crop_patch(label, corner, patch_shape);
    std::copy(pi.data().begin(), pi.data().end(), batch.input.data().begin() + p * patch_elems);
    std::copy(pl.data().begin(), pl.data().end(), batch.label.data().begin() + p * patch_elems);
  }
  return batch;
}

}  // namespace unn
