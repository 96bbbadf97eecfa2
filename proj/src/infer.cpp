#include "unn/infer.hpp"

namespace unn {

std::vector<std::int64_t> slab_offsets(std::int64_t depth, const InferenceConfig& icfg) {
  icfg.validate();
  if (depth < icfg.patch_depth)
    throw ShapeError("infer: volume depth " + std::to_string(depth) +
                     " is smaller than the slab depth " + std::to_string(icfg.patch_depth));
  std::vector<std::int64_t> offsets;
  for (std::int64_t o = 0; o + icfg.patch_depth <= depth; o += icfg.stride)
    offsets.push_back(o);
  const std::int64_t last = depth - icfg.patch_depth;
  if (offsets.empty() || offsets.back() != last) offsets.push_back(last);
  return offsets;
}

InferenceResult infer_volume(const Volume& v, const SlabModel& model,
                             const InferenceConfig& icfg) {
  const auto offsets = slab_offsets(v.dims[0], icfg);
  const std::int64_t H = v.dims[1], W = v.dims[2];
  const std::int64_t slab_elems = icfg.patch_depth * H * W;

  std::vector<double> accum(static_cast<std::size_t>(v.numel()), 0.0);
  std::vector<std::int32_t> coverage(static_cast<std::size_t>(v.numel()), 0);

  InferenceResult result;
  result.slab_offsets = offsets;
  for (const std::int64_t off : offsets) {
    TensorT<float> slab({1, 1, icfg.patch_depth, H, W});
    std::copy(v.data.begin() + off * H * W, v.data.begin() + off * H * W + slab_elems,
              slab.data().begin());
    SlabOutput so = model(slab);
    if (so.out.shape() != slab.shape())
      throw ShapeError("infer: model changed the slab shape");
    const float* sv = so.out.raw();
    for (std::int64_t i = 0; i < slab_elems; ++i) {
      accum[off * H * W + i] += sv[i];
      coverage[off * H * W + i] += 1;
    }
    if (so.weights) result.slab_weights.push_back(*so.weights);
  }

  result.volume = v;
  for (std::int64_t i = 0; i < v.numel(); ++i)
    result.volume.data[i] = static_cast<float>(accum[i] / coverage[i]);
  return result;
}

SlabModel denoiser_slab_model(const DenoiserModel<float>& m) {
  return [&m](const TensorT<float>& slab) {
    return SlabOutput{denoiser_forward(slab, m), std::nullopt};
  };
}

SlabModel unn_slab_model(const UnnModel<float>& m) {
  return [&m](const TensorT<float>& slab) {
    UnnForwardResult<float> r = unn_forward(slab, m);
    return SlabOutput{r.out, to_weight_vector(r.weights).w};
  };
}

SlabModel unn_ws_slab_model(const UnnModel<float>& m) {
  return [&m](const TensorT<float>& slab) {
    UnnForwardResult<float> r = unn_forward(slab, m);
    return SlabOutput{r.ws, to_weight_vector(r.weights).w};
  };
}

}  // namespace unn
