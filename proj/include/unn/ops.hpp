#pragma once

#include <type_traits>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "unn/tensor.hpp"

namespace unn {

// 3D convolution geometry. Kernel/stride/padding are (depth, height, width).
struct ConvSpec {
  std::array<std::int64_t, 3> kernel{1, 1, 1};
  std::array<std::int64_t, 3> stride{1, 1, 1};
  std::array<std::int64_t, 3> padding{0, 0, 0};
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;

  std::int64_t out_extent(int axis, std::int64_t in) const {
    return (in + 2 * padding[axis] - kernel[axis]) / stride[axis] + 1;
  }
  // Natural transpose-convolution output extent.
  std::int64_t tconv_extent(int axis, std::int64_t in) const {
    return (in - 1) * stride[axis] + kernel[axis] - 2 * padding[axis];
  }
  void validate() const;
};

// --- layers ---------------------------------------------------------------

// Cross-correlation of a N x C x D x H x W input with an
// out_ch x in_ch x kD x kH x kW kernel plus per-channel bias.
template <typename T>
TensorT<T> conv3d(const TensorT<T>& input, const TensorT<T>& kernel,
                  const TensorT<T>& bias, const ConvSpec& spec,
                  std::type_identity_t<Tape<T>>* tape = nullptr);

// Transpose (adjoint) of conv3d's linear map, sharing the kernel layout.
// When output_target is set the natural output is center-cropped or
// zero-padded per axis; odd differences put the extra element on the
// high-index side.
template <typename T>
TensorT<T> tconv3d(const TensorT<T>& input, const TensorT<T>& kernel,
                   const TensorT<T>& bias, const ConvSpec& spec,
                   std::optional<std::array<std::int64_t, 3>> output_target = std::nullopt,
                   std::type_identity_t<Tape<T>>* tape = nullptr);

// x[N,F] * w[F,G] + b[G]
template <typename T>
TensorT<T> fully_connected(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>& bias, std::type_identity_t<Tape<T>>* tape = nullptr);

template <typename T>
TensorT<T> relu(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

// Row-wise softmax over the last axis of a [N,K] tensor, max-subtracted.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

// Per-channel mean over D*H*W: [N,C,D,H,W] -> [N,C]
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

// --- elementwise / structural ----------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> divide(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> eltmax(const TensorT<T>& a, const TensorT<T>& b, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> abs_val(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x, T c, std::type_identity_t<Tape<T>>* tape = nullptr);
template <typename T>
TensorT<T> mul_scalar(const TensorT<T>& x, T c, std::type_identity_t<Tape<T>>* tape = nullptr);

// Mean over all elements -> scalar [1]
template <typename T>
TensorT<T> mean_all(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

// Same payload viewed with a new shape (copying; gradients flow through).
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<std::int64_t> new_shape,
                   std::type_identity_t<Tape<T>>* tape = nullptr);

// Concatenate along the channel axis of [N,C,D,H,W] tensors.
template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& xs, std::type_identity_t<Tape<T>>* tape = nullptr);

// x[N,C,D,H,W] scaled per channel by s[N,C].
template <typename T>
TensorT<T> mul_channel_scalars(const TensorT<T>& x, const TensorT<T>& s,
                               std::type_identity_t<Tape<T>>* tape = nullptr);

// x[N,C,D,H,W] scaled per voxel by g[N,1,D,H,W] (broadcast over channels).
template <typename T>
TensorT<T> mul_spatial_gate(const TensorT<T>& x, const TensorT<T>& g,
                            std::type_identity_t<Tape<T>>* tape = nullptr);

// Sum over the channel axis: [N,C,D,H,W] -> [N,1,D,H,W]
template <typename T>
TensorT<T> sum_channels(const TensorT<T>& x, std::type_identity_t<Tape<T>>* tape = nullptr);

}  // namespace unn
