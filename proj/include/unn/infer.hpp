#pragma once

#include <functional>
#include <optional>

#include "unn/models.hpp"
#include "unn/volume.hpp"

namespace unn {

struct InferenceConfig {
  std::int64_t patch_depth = 20;
  std::int64_t stride = 10;

  void validate() const {
    if (patch_depth < 1) throw ConfigError("inference: patch_depth must be >= 1");
    if (stride < 1 || stride > patch_depth)
      throw ConfigError("inference: stride must lie in [1, patch_depth]");
  }
};

struct SlabOutput {
  TensorT<float> out;  // [1,1,pd,H,W]
  std::optional<std::array<double, 6>> weights;
};

using SlabModel = std::function<SlabOutput(const TensorT<float>&)>;

struct InferenceResult {
  Volume volume;
  std::vector<std::int64_t> slab_offsets;
  std::vector<std::array<double, 6>> slab_weights;  // empty for plain denoisers
};

// 20-slice slabs at the configured stride, the final slab aligned to the
// volume end; overlapping outputs are averaged with a per-voxel coverage
// counter.
InferenceResult infer_volume(const Volume& v, const SlabModel& model,
                             const InferenceConfig& icfg);

// Slab offsets used by infer_volume for a given depth (exposed for tests).
std::vector<std::int64_t> slab_offsets(std::int64_t depth, const InferenceConfig& icfg);

SlabModel denoiser_slab_model(const DenoiserModel<float>& m);
SlabModel unn_slab_model(const UnnModel<float>& m);     // fusion output I_out
SlabModel unn_ws_slab_model(const UnnModel<float>& m);  // weighted sum I_ws

}  // namespace unn
