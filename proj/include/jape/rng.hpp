#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

// Counter-based random number generation. Every draw is a pure function of
// (seed, stream, counter), so streams can be evaluated in any order and from
// any thread with bit-identical results.

namespace jape {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream)
      : key_(detail::splitmix64(seed ^ detail::splitmix64(stream))) {}

  /// Uniform draw in (0, 1).
  double uniform(std::uint64_t counter) const {
    const std::uint64_t bits =
        detail::splitmix64(key_ + 0x9e3779b97f4a7c15ull * counter);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal draw (Box-Muller).
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::Vector3d normal3(std::uint64_t counter) const {
    return {normal(3 * counter), normal(3 * counter + 1),
            normal(3 * counter + 2)};
  }

 private:
  std::uint64_t key_;
};

// Stream identifiers used by the simulator.
enum class NoiseStream : std::uint64_t {
  kGyro = 1,
  kAccel = 2,
  kGnssPos = 3,
  kGnssVel = 4,
};

}  // namespace jape
