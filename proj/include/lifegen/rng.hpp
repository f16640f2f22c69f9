#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lifegen {

// Deterministic random source. All randomness in the library flows through
// this class so that a fixed seed reproduces a run bit for bit.
//
// Normal variates use the Box-Muller transform on top of the raw mt19937
// stream instead of std::normal_distribution, whose output sequence is not
// pinned down by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(seed)) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(gen_()) + 0.5) * (1.0 / 4294967296.0);
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    // rejection sampling to avoid modulo bias
    const std::uint32_t limit =
        4294967295u - (4294967295u % static_cast<std::uint32_t>(n));
    std::uint32_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return static_cast<int>(v % static_cast<std::uint32_t>(n));
  }

  // Standard normal via Box-Muller; generates pairs, caches the spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates shuffle.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lifegen
