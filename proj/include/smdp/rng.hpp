/*
 * rng.hpp
 *
 * Counter-based random numbers: every draw is a pure function of the seed
 * and up to four stream indices, so parallel rollouts are reproducible
 * regardless of scheduling. Uniforms come from a SplitMix64-style finalizer,
 * normals from Box-Muller.
 */

#ifndef SMDP_RNG_HPP_
#define SMDP_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace smdp {

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t word(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                     std::uint64_t d = 0) const {
    std::uint64_t s = mix(seed_ ^ 0x5851F42D4C957F2Dull);
    s = mix(s ^ a);
    s = mix(s ^ b);
    s = mix(s ^ c);
    s = mix(s ^ d);
    return s;
  }

  /* uniform on (0, 1]; strictly positive so log() is always safe */
  double uniform01(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                   std::uint64_t d = 0) const {
    return (static_cast<double>(word(a, b, c, d) >> 11) + 1.0) * 0x1.0p-53;
  }

  /* one Box-Muller pair per counter tuple */
  void normal_pair(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d,
                   double& z0, double& z1) const {
    const double u1 = uniform01(a, b, c, 2 * d);
    const double u2 = uniform01(a, b, c, 2 * d + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    z0 = r * std::cos(t);
    z1 = r * std::sin(t);
  }

  /* standard normal draw indexed by (a, b, c, k) */
  double normal(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t k) const {
    double z0, z1;
    normal_pair(a, b, c, k / 2, z0, z1);
    return (k % 2 == 0) ? z0 : z1;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace smdp

#endif
