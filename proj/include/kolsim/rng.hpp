#ifndef KOLSIM_RNG_HPP
#define KOLSIM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <span>

namespace kolsim {

// Counter-based pseudorandom stream. The value at counter c is a fixed
// avalanche mix of (key, c), where the key is derived from (seed, stream).
// Distinct (seed, stream) pairs give reproducible, non-overlapping draws,
// so concurrent replicates can each own stream = replicate index.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : key_(derive_key(seed, stream)) {}

  std::uint64_t next_u64() {
    std::uint64_t z = key_ + (counter_++) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Strictly inside (0,1) so log() is always finite.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 6.283185307179586476925286766559 * u2;
    cached_ = rad * std::sin(ang);
    has_cached_ = true;
    return rad * std::cos(ang);
  }

  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed + 0x9E3779B97F4A7C15ULL) ^ mix64(stream + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// m independent increments of standard Brownian motions over a step dt:
// Gaussian, mean 0, variance dt.
inline void brownian_increments(RngStream& stream, double dt, std::span<double> out) {
  double s = std::sqrt(dt);
  for (double& v : out) v = s * stream.next_gaussian();
}

}  // namespace kolsim

#endif
