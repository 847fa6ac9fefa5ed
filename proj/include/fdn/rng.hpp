#pragma once

#include <cstdint>
#include <random>

namespace fdn {

// Thin wrapper around mt19937 producing platform-independent uniforms.
// std::uniform_real_distribution is implementation-defined; this is not.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(static_cast<uint32_t>(seed)) {}

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(gen_()) * (1.0 / 4294967296.0);
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  // uniform integer in [0, n)
  uint32_t index(uint32_t n) { return gen_() % n; }

  uint32_t raw() { return gen_(); }

  // derive an independent stream, e.g. per sweep cell
  Rng split() { return Rng(gen_()); }

private:
  std::mt19937 gen_;
};

}  // namespace fdn
