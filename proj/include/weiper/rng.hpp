#ifndef WEIPER_RNG_HPP_
#define WEIPER_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace weiper {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream key from a seed and a coordinate tuple, so
// that draws for (seed, a, b, ...) never depend on generation order.
constexpr std::uint64_t stream_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> coords) {
  std::uint64_t key = mix64(seed);
  for (std::uint64_t c : coords) key = mix64(key ^ mix64(c + 0x632be59bd9b4e019ULL));
  return key;
}

// Portable draws on top of mt19937_64: the standard distributions are
// implementation-defined, these are not.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : engine_(key) {}

  // Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller, caching the second variate.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace weiper

#endif  // WEIPER_RNG_HPP_
