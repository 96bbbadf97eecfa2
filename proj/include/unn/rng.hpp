#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace unn {

// Deterministic RNG used throughout the toolkit. Uniform draws are produced
// directly from the engine output so results do not depend on library
// internals; Poisson/binomial sampling uses the standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at the sizes used
  // here (n << 2^64).
  std::uint64_t uniform_index(std::uint64_t n) {
    return n == 0 ? 0 : engine_() % n;
  }

  long poisson(double mean) {
    std::poisson_distribution<long> d(mean);
    return d(engine_);
  }

  long binomial(long n, double p) {
    if (n <= 0) return 0;
    std::binomial_distribution<long> d(n, p);
    return d(engine_);
  }

  // Independent stream for a sub-task (subject index, net index, ...).
  // Does not disturb this instance's sequence.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t z = seed_ ^ (salt + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> seed_ >> engine_;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace unn
