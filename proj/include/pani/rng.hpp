#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pani {

// Seeded random source. The variate transforms are spelled out here (instead
// of using std::*_distribution) so that a seed produces the same stream on
// every standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = engine_(); } while (x >= limit);
        return x % n;
    }

    // standard normal via Box-Muller
    double normal() {
        double u1;
        do { u1 = uniform01(); } while (u1 <= 0.0);
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // zero-mean Laplace with scale b (variance 2 b^2)
    double laplace(double b) {
        const double u = uniform01() - 0.5;
        const double sign = u < 0.0 ? -1.0 : 1.0;
        return -b * sign * std::log(1.0 - 2.0 * std::fabs(u));
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace pani
