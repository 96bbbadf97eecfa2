#pragma once

#include <cstdint>
#include <vector>

#include "unn/tensor.hpp"

namespace unn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;

  void validate() const {
    if (learning_rate < 0) throw ConfigError("adam: learning_rate must be >= 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw ConfigError("adam: betas must lie in (0,1)");
    if (epsilon <= 0) throw ConfigError("adam: epsilon must be > 0");
  }
};

// First/second moment buffers, one pair per parameter, same ordering as the
// parameter list handed to adam_step.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void init_for(const std::vector<TensorT<T>>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.numel(), T(0));
      v.emplace_back(p.numel(), T(0));
    }
  }
  bool matches(const std::vector<TensorT<T>>& params) const {
    if (m.size() != params.size() || v.size() != params.size()) return false;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (static_cast<std::int64_t>(m[i].size()) != params[i].numel()) return false;
    return true;
  }
};

// Bias-corrected Adam update. Increments cfg.step_count, applies the update
// in place and zeroes the gradients afterwards.
template <typename T>
void adam_step(std::vector<TensorT<T>>& params, AdamState<T>& state, AdamConfig& cfg);

extern template void adam_step<float>(std::vector<TensorT<float>>&, AdamState<float>&,
                                      AdamConfig&);
extern template void adam_step<double>(std::vector<TensorT<double>>&, AdamState<double>&,
                                       AdamConfig&);

}  // namespace unn
