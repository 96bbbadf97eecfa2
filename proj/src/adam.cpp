#include "unn/adam.hpp"

#include <cmath>

namespace unn {

template <typename T>
void adam_step(std::vector<TensorT<T>>& params, AdamState<T>& state, AdamConfig& cfg) {
  cfg.validate();
  if (!state.matches(params))
    throw UsageError("adam_step: state does not match parameter list; call init_for first");
  for (auto& p : params)
    if (!p.requires_grad())
      throw UsageError("adam_step: parameter without gradient buffer");

  cfg.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(cfg.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(cfg.step_count));

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    auto g = p.grad();
    auto val = p.data();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      if (!std::isfinite(gi))
        throw TrainingError("adam_step: non-finite gradient encountered");
      m[i] = static_cast<T>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi);
      v[i] = static_cast<T>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
    p.zero_grad();
  }
}

template void adam_step<float>(std::vector<TensorT<float>>&, AdamState<float>&, AdamConfig&);
template void adam_step<double>(std::vector<TensorT<double>>&, AdamState<double>&, AdamConfig&);

}  // namespace unn
