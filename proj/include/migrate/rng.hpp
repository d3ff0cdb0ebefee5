#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace migrate {

// Counter-based random numbers.  Every draw is a pure function of
// (seed, stream label, key, counter), so results do not depend on the order
// in which different streams are consumed or on how work is split across
// threads.  Mixing is the splitmix64 finalizer applied to an accumulated
// state; it passes the usual avalanche checks and is plenty for simulation
// noise (this is not a cryptographic generator).
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream)
      : state_(mix(mix(0x9e3779b97f4a7c15ull ^ seed) ^ hash(stream))) {}

  // Child generator for a keyed subgroup (a row, a state pair, ...).
  Rng keyed(std::uint64_t key) const { return Rng(mix(state_ ^ mix(key + 0x517cc1b727220a95ull))); }
  Rng keyed(std::uint64_t a, std::uint64_t b) const { return keyed(a).keyed(b); }

  std::uint64_t bits(std::uint64_t counter) const { return mix(state_ + counter * 0xbf58476d1ce4e5b9ull); }

  // Uniform on [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform on [lo, hi).
  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller.  Consumes counters 2c and 2c+1, so a
  // sequence of normals indexed by c never overlaps itself.
  double normal(std::uint64_t counter) const {
    // u1 in (0, 1] keeps the log finite.
    double u1 = (static_cast<double>(bits(2 * counter) >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double lognormal(std::uint64_t counter, double sigma) const {
    return std::exp(sigma * normal(counter));
  }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return bits(counter) % n;
  }

  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  explicit Rng(std::uint64_t state) : state_(state) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
};

}  // namespace migrate
