#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace kql {

// Deterministic RNG used everywhere in the library.
//
// Thin wrapper over std::mt19937_64 that derives all draws from the raw
// 64-bit stream itself, never from std::uniform_real_distribution and
// friends: those are implementation-defined (so output would differ across
// standard libraries) and some of them carry hidden state that does not
// round-trip through a checkpoint. Engine state serializes exactly via
// save()/load().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double canonical() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * canonical();
  }

  bool bernoulli(double p) { return canonical() < p; }

  // Uniform in [0, n). Bias from the float path is ~2^-53, irrelevant at
  // the draw counts used here.
  long uniform_int(long n) {
    long i = static_cast<long>(canonical() * static_cast<double>(n));
    return i >= n ? n - 1 : i;
  }

  std::string save() const;
  void load(const std::string& state);

  // Stable sub-seed derivation (splitmix64 over seed ^ stream tag).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 gen_;
};

}  // namespace kql
