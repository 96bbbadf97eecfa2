#pragma once

#include <type_traits>
#include <cstdint>

#include "unn/tensor.hpp"

namespace unn {

// SSIM windowing constants. The window is uniform 11x11; R is the dynamic
// range of the comparison, set per call (the label maximum during training).
struct SsimParams {
  std::int64_t window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const {
    if (window < 1) throw ConfigError("ssim: window must be >= 1");
    if (dynamic_range <= 0) throw ConfigError("ssim: dynamic range must be > 0");
  }
};

struct LossConfig {
  double lambda_a = 0.6;
  SsimParams ssim;

  void validate() const {
    if (lambda_a < 0) throw ConfigError("loss: lambda_a must be >= 0");
    ssim.validate();
  }
};

// Slicing orientations for per-slice SSIM of a volume.
enum class SliceAxis { Axial, Coronal, Sagittal };

// Mean absolute error over a batch of patches (normalized by batch and
// spatial extents); differentiable.
template <typename T>
TensorT<T> mae_loss(const TensorT<T>& label, const TensorT<T>& output,
                    std::type_identity_t<Tape<T>>* tape = nullptr);

// Mean SSIM over all valid (unpadded) windows of two 2-D slices.
template <typename T>
TensorT<T> ssim_map(const TensorT<T>& a, const TensorT<T>& b, const SsimParams& p,
                    std::type_identity_t<Tape<T>>* tape = nullptr);

// Mean SSIM over one slicing orientation of [N,1,D,H,W] volumes.
template <typename T>
TensorT<T> ssim_axis(const TensorT<T>& a, const TensorT<T>& b, SliceAxis axis,
                     const SsimParams& p, std::type_identity_t<Tape<T>>* tape = nullptr);

// Mean of the axial/coronal/sagittal SSIM means.
template <typename T>
TensorT<T> ssim_3axis(const TensorT<T>& a, const TensorT<T>& b, const SsimParams& p,
                      std::type_identity_t<Tape<T>>* tape = nullptr);

// l_MAE + lambda_a * (1 - SSIM_3axis)
template <typename T>
TensorT<T> composite_loss(const TensorT<T>& label, const TensorT<T>& output,
                          const LossConfig& cfg, std::type_identity_t<Tape<T>>* tape = nullptr);

// composite(label, out) + composite(label, ws); the gating-stage objective.
template <typename T>
TensorT<T> stage2_loss(const TensorT<T>& label, const TensorT<T>& out,
                       const TensorT<T>& ws, const LossConfig& cfg,
                       std::type_identity_t<Tape<T>>* tape = nullptr);

// Dynamic range from the label tensor (its maximum, floored away from zero).
template <typename T>
double label_dynamic_range(const TensorT<T>& label);

}  // namespace unn
