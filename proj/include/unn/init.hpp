#pragma once

#include <cstdint>
#include <vector>

#include "unn/rng.hpp"
#include "unn/tensor.hpp"

namespace unn {

// Xavier/Glorot initialization, uniform variant: draws from U(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)), i.e. variance 2 / (fan_in + fan_out).
// Deterministic for a fixed rng state.
template <typename T>
TensorT<T> xavier_init(std::vector<std::int64_t> shape, std::int64_t fan_in,
                       std::int64_t fan_out, Rng& rng) {
  if (fan_in < 1 || fan_out < 1) throw ConfigError("xavier_init: fans must be >= 1");
  TensorT<T> t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-a, a));
  return t;
}

// Conv kernels [oc,ic,kd,kh,kw]: fan_in = ic*kd*kh*kw, fan_out = oc*kd*kh*kw.
template <typename T>
TensorT<T> xavier_conv_kernel(std::int64_t oc, std::int64_t ic, std::int64_t kd,
                              std::int64_t kh, std::int64_t kw, Rng& rng) {
  const std::int64_t taps = kd * kh * kw;
  return xavier_init<T>({oc, ic, kd, kh, kw}, ic * taps, oc * taps, rng);
}

template <typename T>
TensorT<T> xavier_fc_weight(std::int64_t in_features, std::int64_t out_features, Rng& rng) {
  return xavier_init<T>({in_features, out_features}, in_features, out_features, rng);
}

// All bias terms start at zero.
template <typename T>
TensorT<T> zero_bias(std::int64_t channels) {
  return TensorT<T>({channels});
}

}  // namespace unn
