#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace stylepipe {

// Deterministic random source. Gaussians use the Box-Muller transform
// without caching the companion draw, so the stream state is exactly the
// mt19937_64 engine state and serializes to a plain text string.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // uniform in [0, 1)
  double uniform() {
      return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // uniform integer in [0, n)
  int64_t uniform_int(int64_t n) {
      return static_cast<int64_t>(uniform() * static_cast<double>(n));
  }

  // standard normal
  double normal() {
      double u1 = 1.0 - uniform();  // (0, 1]
      double u2 = uniform();
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  uint64_t raw() { return engine_(); }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace stylepipe
