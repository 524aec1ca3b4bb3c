#pragma once

#include <cstdint>
#include <random>

namespace flowref {

namespace detail {
// splitmix64; used only for seed scrambling / stream derivation.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Seeded random stream. Every concurrent task owns its own stream;
/// derive(id) gives a statistically independent child stream, so per-item
/// results do not depend on scheduling order.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed)
      : seed_(seed), engine_(detail::mix64(seed)) {}

  RandomStream derive(std::uint64_t stream_id) const {
    return RandomStream(detail::mix64(seed_ ^ detail::mix64(stream_id)));
  }

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }

  /// Uniform on [0, 1).
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  /// Uniform integer in [0, bound).
  std::uint64_t integer(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace flowref
