#ifndef SQ_RNG_HPP_
#define SQ_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>

namespace sq {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// xoshiro256++ engine with splitmix64 seeding.
///
/// Chosen over std:: engines because its 32-byte state serializes directly
/// into checkpoints and the uniform/normal mappings below are fixed here,
/// not delegated to implementation-defined std distributions. All training
/// randomness is drawn from streams derived via for_stream so that any
/// (seed, purpose, layer, iteration) tuple reproduces the same draws.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = detail::splitmix64(x);
  }

  /// Deterministic stream derivation from a seed and up to three stream ids.
  static Rng for_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                        std::uint64_t c = 0) {
    std::uint64_t x = seed;
    std::uint64_t h = detail::splitmix64(x);
    x ^= a * 0x9e3779b97f4a7c15ULL;
    h ^= detail::splitmix64(x);
    x ^= b * 0xd1b54a32d192ed03ULL;
    h ^= detail::splitmix64(x);
    x ^= c * 0x8cb92ba72f3d8dd7ULL;
    h ^= detail::splitmix64(x);
    return Rng(h);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1]; used by the roulette draw.
  double uniform_open01() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Marsaglia polar, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  const State& state() const { return state_; }
  void set_state(const State& s) {
    state_ = s;
    has_spare_ = false;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  State state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sq

#endif  // SQ_RNG_HPP_
