#include "unn/models.hpp"

#include <cmath>
#include <cstdio>

#include "unn/init.hpp"

namespace unn {

std::string count_level_label(double fraction) {
  const double pct = fraction * 100.0;
  char buf[32];
  if (std::abs(pct - std::round(pct)) < 1e-9)
    std::snprintf(buf, sizeof(buf), "Net_%d", static_cast<int>(std::round(pct)));
  else
    std::snprintf(buf, sizeof(buf), "Net_%.3g", pct);
  return buf;
}

void DenoiserConfig::validate() const {
  if (base_filters < 1) throw ConfigError("denoiser: base_filters must be >= 1");
  if (down_stages != up_stages) throw ConfigError("denoiser: down_stages != up_stages");
  if (down_stages < 1) throw ConfigError("denoiser: needs at least one stage");
  if (dense_block_layers < 1) throw ConfigError("denoiser: dense_block_layers must be >= 1");
  if (se_reduction < 1) throw ConfigError("denoiser: se_reduction must be >= 1");
  if (base_filters % se_reduction != 0)
    throw ConfigError("denoiser: base_filters " + std::to_string(base_filters) +
                      " not divisible by se_reduction " + std::to_string(se_reduction));
}

void NoiseAwareConfig::validate() const {
  if (filters < 1) throw ConfigError("noise-aware: filters must be >= 1");
  if (fc_hidden < 1) throw ConfigError("noise-aware: fc_hidden must be >= 1");
  for (auto e : slab_shape)
    if (e < 1) throw ConfigError("noise-aware: slab extents must be >= 1");
  if (noise_aware_flatten_width(*this) < 1)
    throw ConfigError("noise-aware: slab shape too small for the five conv layers");
}

void WeightVector::validate() const {
  double sum = 0;
  for (double v : w) {
    if (v < 0.0 || v > 1.0) throw ConfigError("weight vector entry outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ConfigError("weight vector does not sum to 1 (got " + std::to_string(sum) + ")");
}

std::vector<std::int64_t> denoiser_extent_chain(std::int64_t extent, int stages) {
  std::vector<std::int64_t> chain{extent};
  for (int s = 0; s < stages; ++s) {
    extent = (extent - 3) / 2 + 1;  // k=3, stride 2, no padding
    chain.push_back(extent);
  }
  return chain;
}

std::int64_t noise_aware_flatten_width(const NoiseAwareConfig& cfg) {
  std::array<std::int64_t, 3> e = cfg.slab_shape;
  for (const auto& stride : NoiseAwareConfig::kStrides)
    for (int a = 0; a < 3; ++a) e[a] = (e[a] + 2 - 3) / stride[a] + 1;  // k=3, pad 1
  for (int a = 0; a < 3; ++a)
    if (e[a] < 1) return 0;
  return cfg.filters * e[0] * e[1] * e[2];
}

// --- construction -----------------------------------------------------------

namespace {

template <typename T>
Conv3dLayer<T> make_conv(std::int64_t in_ch, std::int64_t out_ch,
                         std::array<std::int64_t, 3> kernel,
                         std::array<std::int64_t, 3> stride,
                         std::array<std::int64_t, 3> padding, Rng& rng) {
  Conv3dLayer<T> l;
  l.spec.kernel = kernel;
  l.spec.stride = stride;
  l.spec.padding = padding;
  l.spec.in_channels = in_ch;
  l.spec.out_channels = out_ch;
  l.kernel = xavier_conv_kernel<T>(out_ch, in_ch, kernel[0], kernel[1], kernel[2], rng);
  l.bias = zero_bias<T>(out_ch);
  return l;
}

template <typename T>
DenseBlock<T> make_dense_block(std::int64_t width, int layers, Rng& rng) {
  DenseBlock<T> b;
  for (int j = 0; j < layers; ++j)
    b.layers.push_back(
        make_conv<T>(width * (j + 1), width, {5, 3, 3}, {1, 1, 1}, {2, 1, 1}, rng));
  return b;
}

template <typename T>
ScSeBlock<T> make_scse(std::int64_t channels, std::int64_t reduction, Rng& rng) {
  if (channels % reduction != 0)
    throw ConfigError("scSE: channels " + std::to_string(channels) +
                      " not divisible by reduction " + std::to_string(reduction));
  ScSeBlock<T> b;
  const std::int64_t mid = channels / reduction;
  b.fc1.weight = xavier_fc_weight<T>(channels, mid, rng);
  b.fc1.bias = zero_bias<T>(mid);
  b.fc2.weight = xavier_fc_weight<T>(mid, channels, rng);
  b.fc2.bias = zero_bias<T>(channels);
  b.spatial = make_conv<T>(channels, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
  return b;
}

}  // namespace

template <typename T>
DenoiserModel<T> make_denoiser(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  DenoiserModel<T> m;
  m.cfg = cfg;
  const std::int64_t bf = cfg.base_filters;
  for (int s = 0; s < cfg.down_stages; ++s) {
    DenoiserStage<T> st;
    st.resample = make_conv<T>(s == 0 ? 1 : bf, bf, {1, 3, 3}, {1, 2, 2}, {0, 0, 0}, rng);
    st.dense = make_dense_block<T>(bf, cfg.dense_block_layers, rng);
    st.se = make_scse<T>(bf, cfg.se_reduction, rng);
    m.down.push_back(std::move(st));
  }
  for (int s = 0; s < cfg.up_stages; ++s) {
    DenoiserStage<T> st;
    // Transpose conv in conv orientation: inverts a bf -> bf down conv.
    st.resample = make_conv<T>(bf, bf, {1, 3, 3}, {1, 2, 2}, {0, 0, 0}, rng);
    st.dense = make_dense_block<T>(bf, cfg.dense_block_layers, rng);
    st.se = make_scse<T>(bf, cfg.se_reduction, rng);
    m.up.push_back(std::move(st));
  }
  m.squeeze = make_conv<T>(bf, 1, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
  return m;
}

template <typename T>
NoiseAwareModel<T> make_noise_aware(const NoiseAwareConfig& cfg, Rng& rng) {
  cfg.validate();
  NoiseAwareModel<T> m;
  m.cfg = cfg;
  for (int l = 0; l < NoiseAwareConfig::kConvLayers; ++l)
    m.convs.push_back(make_conv<T>(l == 0 ? 1 : cfg.filters, cfg.filters, {3, 3, 3},
                                   NoiseAwareConfig::kStrides[l], {1, 1, 1}, rng));
  const std::int64_t flat = noise_aware_flatten_width(cfg);
  m.fc1.weight = xavier_fc_weight<T>(flat, cfg.fc_hidden, rng);
  m.fc1.bias = zero_bias<T>(cfg.fc_hidden);
  m.fc2.weight = xavier_fc_weight<T>(cfg.fc_hidden, kNumLevels, rng);
  m.fc2.bias = zero_bias<T>(kNumLevels);
  return m;
}

template <typename T>
FusionModel<T> make_fusion(const FusionConfig& cfg, Rng& rng) {
  if (cfg.filters < 1) throw ConfigError("fusion: filters must be >= 1");
  FusionModel<T> m;
  m.cfg = cfg;
  for (int l = 0; l < FusionConfig::kLayers; ++l) {
    const std::int64_t in_ch = l == 0 ? kNumLevels : cfg.filters;
    const std::int64_t out_ch = l == FusionConfig::kLayers - 1 ? 1 : cfg.filters;
    m.convs.push_back(make_conv<T>(in_ch, out_ch, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng));
  }
  return m;
}

// --- parameter access ---------------------------------------------------------

namespace {

template <typename T>
void push(NamedParams<T>& out, const std::string& name, const TensorT<T>& t) {
  out.emplace_back(name, t);
}

template <typename T>
void push_conv(NamedParams<T>& out, const std::string& prefix, const Conv3dLayer<T>& l) {
  push(out, prefix + ".kernel", l.kernel);
  push(out, prefix + ".bias", l.bias);
}

template <typename T>
void push_stage(NamedParams<T>& out, const std::string& prefix, const DenoiserStage<T>& st) {
  push_conv(out, prefix + ".resample", st.resample);
  for (std::size_t j = 0; j < st.dense.layers.size(); ++j)
    push_conv(out, prefix + ".dense" + std::to_string(j), st.dense.layers[j]);
  push(out, prefix + ".se.fc1.weight", st.se.fc1.weight);
  push(out, prefix + ".se.fc1.bias", st.se.fc1.bias);
  push(out, prefix + ".se.fc2.weight", st.se.fc2.weight);
  push(out, prefix + ".se.fc2.bias", st.se.fc2.bias);
  push_conv(out, prefix + ".se.spatial", st.se.spatial);
}

}  // namespace

template <typename T>
NamedParams<T> named_parameters(const DenoiserModel<T>& m) {
  NamedParams<T> out;
  for (std::size_t s = 0; s < m.down.size(); ++s)
    push_stage(out, "down" + std::to_string(s), m.down[s]);
  for (std::size_t s = 0; s < m.up.size(); ++s)
    push_stage(out, "up" + std::to_string(s), m.up[s]);
  push_conv(out, "squeeze", m.squeeze);
  return out;
}

template <typename T>
NamedParams<T> named_parameters(const NoiseAwareModel<T>& m) {
  NamedParams<T> out;
  for (std::size_t l = 0; l < m.convs.size(); ++l)
    push_conv(out, "conv" + std::to_string(l), m.convs[l]);
  push(out, "fc1.weight", m.fc1.weight);
  push(out, "fc1.bias", m.fc1.bias);
  push(out, "fc2.weight", m.fc2.weight);
  push(out, "fc2.bias", m.fc2.bias);
  return out;
}

template <typename T>
NamedParams<T> named_parameters(const FusionModel<T>& m) {
  NamedParams<T> out;
  for (std::size_t l = 0; l < m.convs.size(); ++l)
    push_conv(out, "conv" + std::to_string(l), m.convs[l]);
  return out;
}

template <typename T>
NamedParams<T> named_parameters(const UnnModel<T>& m) {
  NamedParams<T> out;
  for (int i = 0; i < kNumLevels; ++i)
    for (auto& [name, t] : named_parameters(m.denoisers[i]))
      push(out, "den" + std::to_string(i) + "." + name, t);
  for (auto& [name, t] : named_parameters(m.gating)) push(out, "gating." + name, t);
  for (auto& [name, t] : named_parameters(m.fusion)) push(out, "fusion." + name, t);
  return out;
}

// --- forward passes -------------------------------------------------------------

template <typename T>
TensorT<T> dense_block_forward(const TensorT<T>& x, const DenseBlock<T>& block, std::type_identity_t<Tape<T>>* tape,
                               std::vector<std::int64_t>* layer_input_channels) {
  if (x.rank() != 5) throw ShapeError("dense block input must be 5-D");
  if (x.extent(1) != block.layers.at(0).spec.in_channels)
    throw ShapeError("dense block: expected " +
                     std::to_string(block.layers[0].spec.in_channels) + " channels, got " +
                     std::to_string(x.extent(1)));
  std::vector<TensorT<T>> feed{x};
  TensorT<T> y;
  for (std::size_t j = 0; j < block.layers.size(); ++j) {
    TensorT<T> in = feed.size() == 1 ? feed[0] : concat_channels(feed, tape);
    if (layer_input_channels) layer_input_channels->push_back(in.extent(1));
    const auto& l = block.layers[j];
    y = relu(conv3d(in, l.kernel, l.bias, l.spec, tape), tape);
    feed.push_back(y);
  }
  return y;  // last layer's output keeps the block width
}

template <typename T>
TensorT<T> scse_forward(const TensorT<T>& x, const ScSeBlock<T>& block, std::type_identity_t<Tape<T>>* tape) {
  if (x.rank() != 5) throw ShapeError("scSE input must be 5-D");
  const std::int64_t C = x.extent(1);
  if (block.fc1.weight.extent(0) != C)
    throw ShapeError("scSE: block built for " + std::to_string(block.fc1.weight.extent(0)) +
                     " channels, got " + std::to_string(C));
  // Channel branch: squeeze to per-channel stats, two FCs, sigmoid gate.
  TensorT<T> pooled = global_avg_pool(x, tape);
  TensorT<T> mid = relu(fully_connected(pooled, block.fc1.weight, block.fc1.bias, tape), tape);
  TensorT<T> cgate =
      sigmoid(fully_connected(mid, block.fc2.weight, block.fc2.bias, tape), tape);
  TensorT<T> channel_out = mul_channel_scalars(x, cgate, tape);
  // Spatial branch: 1x1x1 conv to one channel, sigmoid gate per voxel.
  TensorT<T> sgate =
      sigmoid(conv3d(x, block.spatial.kernel, block.spatial.bias, block.spatial.spec, tape),
              tape);
  TensorT<T> spatial_out = mul_spatial_gate(x, sgate, tape);
  return eltmax(channel_out, spatial_out, tape);
}

template <typename T>
TensorT<T> denoiser_forward(const TensorT<T>& x, const DenoiserModel<T>& m, std::type_identity_t<Tape<T>>* tape,
                            DenoiserTrace* trace) {
  if (x.rank() != 5) throw ShapeError("denoiser input must be 5-D");
  if (x.extent(1) != 1) throw ShapeError("denoiser input must have a single channel");
  const int stages = m.cfg.down_stages;
  const std::int64_t D = x.extent(2);
  auto hchain = denoiser_extent_chain(x.extent(3), stages);
  auto wchain = denoiser_extent_chain(x.extent(4), stages);
  for (int s = 1; s <= stages; ++s)
    if (hchain[s] < 1 || wchain[s] < 1)
      throw ConfigError("denoiser: input " + std::to_string(x.extent(3)) + "x" +
                        std::to_string(x.extent(4)) +
                        " too small for down-sampling stage " + std::to_string(s));

  if (trace) trace->inplane.push_back({x.extent(3), x.extent(4)});
  TensorT<T> h = x;
  for (int s = 0; s < stages; ++s) {
    const auto& st = m.down[s];
    h = relu(conv3d(h, st.resample.kernel, st.resample.bias, st.resample.spec, tape), tape);
    h = dense_block_forward(h, st.dense, tape);
    h = scse_forward(h, st.se, tape);
    if (trace) trace->inplane.push_back({h.extent(3), h.extent(4)});
  }
  for (int s = 0; s < stages; ++s) {
    const auto& st = m.up[s];
    // Mirror the encoder extent; the last stage targets the input extent.
    const std::array<std::int64_t, 3> target = {D, hchain[stages - 1 - s],
                                                wchain[stages - 1 - s]};
    h = relu(tconv3d(h, st.resample.kernel, st.resample.bias, st.resample.spec, target, tape),
             tape);
    h = dense_block_forward(h, st.dense, tape);
    h = scse_forward(h, st.se, tape);
    if (trace) trace->inplane.push_back({h.extent(3), h.extent(4)});
  }
  return conv3d(h, m.squeeze.kernel, m.squeeze.bias, m.squeeze.spec, tape);
}

template <typename T>
TensorT<T> noise_aware_forward(const TensorT<T>& x, const NoiseAwareModel<T>& m, std::type_identity_t<Tape<T>>* tape,
                               NoiseAwareTrace* trace) {
  if (x.rank() != 5) throw ShapeError("noise-aware input must be 5-D");
  if (x.extent(1) != 1) throw ShapeError("noise-aware input must have a single channel");
  const auto& slab = m.cfg.slab_shape;
  if (x.extent(2) != slab[0] || x.extent(3) != slab[1] || x.extent(4) != slab[2])
    throw ConfigError("noise-aware slab shape mismatch: model was built for " +
                      std::to_string(slab[0]) + "x" + std::to_string(slab[1]) + "x" +
                      std::to_string(slab[2]) + ", got " + std::to_string(x.extent(2)) + "x" +
                      std::to_string(x.extent(3)) + "x" + std::to_string(x.extent(4)));
  TensorT<T> h = x;
  for (const auto& l : m.convs) {
    h = relu(conv3d(h, l.kernel, l.bias, l.spec, tape), tape);
    if (trace) trace->extents.push_back({h.extent(2), h.extent(3), h.extent(4)});
  }
  const std::int64_t flat = h.extent(1) * h.extent(2) * h.extent(3) * h.extent(4);
  if (trace) trace->flatten_width = flat;
  h = reshape(h, {h.extent(0), flat}, tape);
  h = relu(fully_connected(h, m.fc1.weight, m.fc1.bias, tape), tape);
  h = fully_connected(h, m.fc2.weight, m.fc2.bias, tape);
  return softmax_rows(h, tape);
}

template <typename T>
TensorT<T> fusion_forward(const TensorT<T>& weighted_stack, const FusionModel<T>& m,
                          std::type_identity_t<Tape<T>>* tape) {
  if (weighted_stack.rank() != 5) throw ShapeError("fusion input must be 5-D");
  if (weighted_stack.extent(1) != kNumLevels)
    throw ShapeError("fusion input must have " + std::to_string(kNumLevels) +
                     " channels, got " + std::to_string(weighted_stack.extent(1)));
  TensorT<T> h = weighted_stack;
  for (int l = 0; l < FusionConfig::kLayers; ++l) {
    const auto& c = m.convs[l];
    h = conv3d(h, c.kernel, c.bias, c.spec, tape);
    if (l + 1 < FusionConfig::kLayers) h = relu(h, tape);
  }
  return h;
}

template <typename T>
UnnForwardResult<T> unn_forward_with_weights(const TensorT<T>& slab, const UnnModel<T>& m,
                                             const TensorT<T>& weights, std::type_identity_t<Tape<T>>* tape) {
  if (weights.rank() != 2 || weights.extent(0) != slab.extent(0) ||
      weights.extent(1) != kNumLevels)
    throw ShapeError("unn: weights must be [N,6]");
  Tape<T>* den_tape = m.frozen_denoisers ? nullptr : tape;
  std::vector<TensorT<T>> outs;
  outs.reserve(kNumLevels);
  for (int i = 0; i < kNumLevels; ++i)
    outs.push_back(denoiser_forward(slab, m.denoisers[i], den_tape));
  TensorT<T> stack = concat_channels(outs, tape);
  TensorT<T> wstack = mul_channel_scalars(stack, weights, tape);
  UnnForwardResult<T> r;
  r.weights = weights;
  r.ws = sum_channels(wstack, tape);
  r.out = fusion_forward(wstack, m.fusion, tape);
  return r;
}

template <typename T>
UnnForwardResult<T> unn_forward(const TensorT<T>& slab, const UnnModel<T>& m, std::type_identity_t<Tape<T>>* tape) {
  TensorT<T> w = noise_aware_forward(slab, m.gating, tape);
  return unn_forward_with_weights(slab, m, w, tape);
}

template <typename T>
WeightVector to_weight_vector(const TensorT<T>& weights) {
  if (weights.numel() != kNumLevels)
    throw ShapeError("to_weight_vector: expected 6 entries");
  WeightVector wv;
  for (int i = 0; i < kNumLevels; ++i) wv.w[i] = static_cast<double>(weights.data()[i]);
  wv.validate();
  return wv;
}

// --- explicit instantiations ------------------------------------------------

#define UNN_INSTANTIATE_MODELS(T)                                                          \
  template DenoiserModel<T> make_denoiser<T>(const DenoiserConfig&, Rng&);                 \
  template NoiseAwareModel<T> make_noise_aware<T>(const NoiseAwareConfig&, Rng&);          \
  template FusionModel<T> make_fusion<T>(const FusionConfig&, Rng&);                       \
  template NamedParams<T> named_parameters<T>(const DenoiserModel<T>&);                    \
  template NamedParams<T> named_parameters<T>(const NoiseAwareModel<T>&);                  \
  template NamedParams<T> named_parameters<T>(const FusionModel<T>&);                      \
  template NamedParams<T> named_parameters<T>(const UnnModel<T>&);                         \
  template TensorT<T> dense_block_forward<T>(const TensorT<T>&, const DenseBlock<T>&,      \
                                             Tape<T>*, std::vector<std::int64_t>*);        \
  template TensorT<T> scse_forward<T>(const TensorT<T>&, const ScSeBlock<T>&, Tape<T>*);   \
  template TensorT<T> denoiser_forward<T>(const TensorT<T>&, const DenoiserModel<T>&,      \
                                          Tape<T>*, DenoiserTrace*);                       \
  template TensorT<T> noise_aware_forward<T>(const TensorT<T>&, const NoiseAwareModel<T>&, \
                                             Tape<T>*, NoiseAwareTrace*);                  \
  template TensorT<T> fusion_forward<T>(const TensorT<T>&, const FusionModel<T>&, Tape<T>*);\
  template UnnForwardResult<T> unn_forward_with_weights<T>(                                \
      const TensorT<T>&, const UnnModel<T>&, const TensorT<T>&, Tape<T>*);                 \
  template UnnForwardResult<T> unn_forward<T>(const TensorT<T>&, const UnnModel<T>&,       \
                                              Tape<T>*);                                   \
  template WeightVector to_weight_vector<T>(const TensorT<T>&);

UNN_INSTANTIATE_MODELS(float)
UNN_INSTANTIATE_MODELS(double)

}  // namespace unn
