#pragma once

#include <type_traits>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unn/ops.hpp"
#include "unn/rng.hpp"
#include "unn/tensor.hpp"

namespace unn {

// The six canonical count-level fractions, in denoiser order
// (Net_1, Net_2, Net_5, Net_10, Net_25, Net_50).
inline constexpr std::array<double, 6> kCountLevels = {0.01, 0.02, 0.05, 0.10, 0.25, 0.50};
inline constexpr int kNumLevels = 6;

std::string count_level_label(double fraction);  // 0.01 -> "Net_1"

// --- configs ----------------------------------------------------------------

struct DenoiserConfig {
  std::int64_t base_filters = 32;
  int down_stages = 4;
  int up_stages = 4;
  int dense_block_layers = 3;
  std::int64_t se_reduction = 2;
  // Down/up kernels are (1,3,3) without padding, stride (1,2,2); dense-block
  // kernels are (5,3,3) zero-padded (2,1,1), stride 1.

  void validate() const;
  bool operator==(const DenoiserConfig&) const = default;
};

struct NoiseAwareConfig {
  std::int64_t filters = 32;
  static constexpr int kConvLayers = 5;
  static constexpr std::array<std::array<std::int64_t, 3>, 5> kStrides = {
      {{1, 2, 2}, {2, 2, 2}, {1, 2, 2}, {2, 2, 2}, {2, 2, 2}}};
  std::int64_t fc_hidden = 18;
  std::array<std::int64_t, 3> slab_shape = {20, 64, 64};  // D,H,W; fixes the flatten width

  void validate() const;
  bool operator==(const NoiseAwareConfig&) const = default;
};

struct FusionConfig {
  std::int64_t filters = 32;
  static constexpr int kLayers = 6;

  bool operator==(const FusionConfig&) const = default;
};

// Six softmax weights, one per denoiser, in kCountLevels order.
struct WeightVector {
  std::array<double, 6> w{};
  void validate() const;
};

// --- parameter-holding building blocks --------------------------------------

template <typename T>
struct Conv3dLayer {
  ConvSpec spec;
  TensorT<T> kernel;
  TensorT<T> bias;
};

template <typename T>
struct LinearLayer {
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
struct DenseBlock {
  std::vector<Conv3dLayer<T>> layers;  // inputs widen C, 2C, 3C; each emits C
};

template <typename T>
struct ScSeBlock {
  LinearLayer<T> fc1;  // C -> C/r
  LinearLayer<T> fc2;  // C/r -> C
  Conv3dLayer<T> spatial;  // 1x1x1, C -> 1
};

template <typename T>
struct DenoiserStage {
  Conv3dLayer<T> resample;  // down conv or up tconv
  DenseBlock<T> dense;
  ScSeBlock<T> se;
};

template <typename T>
struct DenoiserModel {
  DenoiserConfig cfg;
  std::vector<DenoiserStage<T>> down;
  std::vector<DenoiserStage<T>> up;
  Conv3dLayer<T> squeeze;  // 1x1x1 to a single channel, no activation
};

template <typename T>
struct NoiseAwareModel {
  NoiseAwareConfig cfg;
  std::vector<Conv3dLayer<T>> convs;
  LinearLayer<T> fc1;
  LinearLayer<T> fc2;
};

template <typename T>
struct FusionModel {
  FusionConfig cfg;
  std::vector<Conv3dLayer<T>> convs;
};

template <typename T>
struct UnnModel {
  std::array<DenoiserModel<T>, 6> denoisers;  // kCountLevels order
  NoiseAwareModel<T> gating;
  FusionModel<T> fusion;
  bool frozen_denoisers = true;
};

// --- construction -----------------------------------------------------------

template <typename T>
DenoiserModel<T> make_denoiser(const DenoiserConfig& cfg, Rng& rng);
template <typename T>
NoiseAwareModel<T> make_noise_aware(const NoiseAwareConfig& cfg, Rng& rng);
template <typename T>
FusionModel<T> make_fusion(const FusionConfig& cfg, Rng& rng);

// Flatten width of the gating FC input for a given config.
std::int64_t noise_aware_flatten_width(const NoiseAwareConfig& cfg);

// --- parameter access --------------------------------------------------------

template <typename T>
using NamedParams = std::vector<std::pair<std::string, TensorT<T>>>;

template <typename T>
NamedParams<T> named_parameters(const DenoiserModel<T>& m);
template <typename T>
NamedParams<T> named_parameters(const NoiseAwareModel<T>& m);
template <typename T>
NamedParams<T> named_parameters(const FusionModel<T>& m);
template <typename T>
NamedParams<T> named_parameters(const UnnModel<T>& m);

template <typename T>
std::vector<TensorT<T>> parameters(const NamedParams<T>& named) {
  std::vector<TensorT<T>> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

template <typename T, typename Model>
std::int64_t count_parameters(const Model& m) {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_parameters(m)) n += t.numel();
  return n;
}

template <typename T>
void set_requires_grad(NamedParams<T>& params, bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

// --- forward passes -----------------------------------------------------------

struct DenoiserTrace {
  // In-plane (H,W) extents: input, after each down stage, after each up stage.
  std::vector<std::array<std::int64_t, 2>> inplane;
};

struct NoiseAwareTrace {
  std::vector<std::array<std::int64_t, 3>> extents;  // after each conv layer
  std::int64_t flatten_width = 0;
};

template <typename T>
TensorT<T> dense_block_forward(const TensorT<T>& x, const DenseBlock<T>& block,
                               std::type_identity_t<Tape<T>>* tape = nullptr,
                               std::vector<std::int64_t>* layer_input_channels = nullptr);

template <typename T>
TensorT<T> scse_forward(const TensorT<T>& x, const ScSeBlock<T>& block,
                        std::type_identity_t<Tape<T>>* tape = nullptr);

template <typename T>
TensorT<T> denoiser_forward(const TensorT<T>& x, const DenoiserModel<T>& m,
                            std::type_identity_t<Tape<T>>* tape = nullptr, DenoiserTrace* trace = nullptr);

// Returns softmax weights [N,6]; throws if the slab shape does not match the
// shape the model was built for.
template <typename T>
TensorT<T> noise_aware_forward(const TensorT<T>& x, const NoiseAwareModel<T>& m,
                               std::type_identity_t<Tape<T>>* tape = nullptr, NoiseAwareTrace* trace = nullptr);

template <typename T>
TensorT<T> fusion_forward(const TensorT<T>& weighted_stack, const FusionModel<T>& m,
                          std::type_identity_t<Tape<T>>* tape = nullptr);

template <typename T>
struct UnnForwardResult {
  TensorT<T> out;      // fusion head output
  TensorT<T> ws;       // weighted sum of the six denoised slabs
  TensorT<T> weights;  // [1,6] softmax weights
};

template <typename T>
UnnForwardResult<T> unn_forward(const TensorT<T>& slab, const UnnModel<T>& m,
                                std::type_identity_t<Tape<T>>* tape = nullptr);

// Same as unn_forward but with externally supplied weights [1,6] (the gating
// network is skipped). Used by the uniform/one-hot baselines.
template <typename T>
UnnForwardResult<T> unn_forward_with_weights(const TensorT<T>& slab, const UnnModel<T>& m,
                                             const TensorT<T>& weights,
                                             std::type_identity_t<Tape<T>>* tape = nullptr);

template <typename T>
WeightVector to_weight_vector(const TensorT<T>& weights);

// In-plane extent chain for the denoiser encoder (input extent included).
std::vector<std::int64_t> denoiser_extent_chain(std::int64_t extent, int stages);

}  // namespace unn
