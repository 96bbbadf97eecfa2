// Independent oracles used by the test suites: central finite differences for
// gradients, a direct double-loop SSIM, and small statistics helpers. These
// never call the implementation paths they verify.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "unn/rng.hpp"
#include "unn/tensor.hpp"

namespace unn::testing {

inline void fill_random(TensorT<double>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

inline void fill_random(TensorT<float>& t, Rng& rng, double lo = -1.0, double hi = 1.0) {
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
}

// Central finite differences against analytic gradients.
//   forward_loss: rebuilds the graph from current tensor values, no tape.
//   taped_loss:   rebuilds the graph on the given tape (for analytic grads).
// Checks every element when a tensor has <= max_full elements, otherwise a
// deterministic stride subsample. Returns the max relative error seen.
struct GradCheck {
  double h = 1e-6;
  std::int64_t max_full = 4096;
  std::int64_t samples_per_tensor = 24;

  double max_rel_err(std::vector<TensorT<double>> inputs,
                     const std::function<double()>& forward_loss,
                     const std::function<TensorT<double>(Tape<double>&)>& taped_loss) const {
    Tape<double> tape;
    TensorT<double> loss = taped_loss(tape);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) {
      auto g = t.grad();
      analytic.emplace_back(g.begin(), g.end());
    }

    double worst = 0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
      auto& t = inputs[ti];
      const std::int64_t n = t.numel();
      const std::int64_t stride =
          n <= max_full ? 1 : std::max<std::int64_t>(1, n / samples_per_tensor);
      for (std::int64_t i = 0; i < n; i += stride) {
        const double v = t.data()[i];
        t.data()[i] = v + h;
        const double lp = forward_loss();
        t.data()[i] = v - h;
        const double lm = forward_loss();
        t.data()[i] = v;
        const double fd = (lp - lm) / (2.0 * h);
        const double a = analytic[ti][i];
        const double rel = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-4);
        worst = std::max(worst, rel);
      }
    }
    return worst;
  }
};

// Direct sliding-window SSIM over valid windows of two 2-D images,
// population statistics, uniform window.
inline double ssim_double_loop(const std::vector<double>& a, const std::vector<double>& b,
                               std::int64_t h, std::int64_t w, std::int64_t win, double c1,
                               double c2) {
  double total = 0;
  std::int64_t count = 0;
  for (std::int64_t y = 0; y + win <= h; ++y)
    for (std::int64_t x = 0; x + win <= w; ++x) {
      double ma = 0, mb = 0;
      for (std::int64_t dy = 0; dy < win; ++dy)
        for (std::int64_t dx = 0; dx < win; ++dx) {
          ma += a[(y + dy) * w + x + dx];
          mb += b[(y + dy) * w + x + dx];
        }
      const double n = static_cast<double>(win * win);
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (std::int64_t dy = 0; dy < win; ++dy)
        for (std::int64_t dx = 0; dx < win; ++dx) {
          const double da = a[(y + dy) * w + x + dx] - ma;
          const double db = b[(y + dy) * w + x + dx] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= n;
      vb /= n;
      cov /= n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      count += 1;
    }
  return total / count;
}

inline double inner_product(const TensorT<double>& a, const TensorT<double>& b) {
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i] * b.data()[i];
  return acc;
}

}  // namespace unn::testing
