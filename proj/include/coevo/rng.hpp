#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace coevo {

/// SplitMix64 finalizer. Used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over bytes. Stable across platforms; used for content keys and file hashes.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Combine a base key with a list of tags into a new key.
inline std::uint64_t derive_key(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t k = mix64(base);
  for (auto t : tags) k = mix64(k ^ mix64(t + 0x632be59bd9b4e019ULL));
  return k;
}

/// Uniform in [0,1) from a 64-bit word (53 significant bits).
constexpr double to_unit(std::uint64_t x) noexcept {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

/// Seeded random stream. The bounded draws are implemented here rather than with
/// std::uniform_*_distribution so that outputs are identical on every standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : engine_(mix64(key)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return lo + uniform_index(hi - lo + 1);
  }

  double uniform01() { return to_unit(engine_()); }

  /// True with probability p; p <= 0 never, p >= 1 always.
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace coevo
