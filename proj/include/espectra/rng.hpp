#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace espectra {

/// SplitMix64 finalizer. Bijective avalanche mix of a 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a sequence of words into one stream key.
constexpr std::uint64_t hash_combine(std::uint64_t seed) noexcept { return mix64(seed); }

template <typename... Rest>
constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t next, Rest... rest) noexcept {
  return hash_combine(mix64(seed) ^ (next + 0x632be59bd9b4e019ULL), rest...);
}

/// Key of the stream that fills entry (i, j) of factor `factor`.
constexpr std::uint64_t entry_stream_key(std::uint64_t seed, std::uint64_t factor, std::uint64_t i,
                                         std::uint64_t j) noexcept {
  return hash_combine(seed, factor, i, j);
}

/// Counter-based generator: the k-th output is mix64(key ^ mix64(k * c)), so
/// any stream can be regenerated from its key alone, independent of the
/// order in which streams are consumed.
class CounterStream {
 public:
  explicit constexpr CounterStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ ^ mix64(counter_ * 0xd1342543de82ef95ULL));
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  /// +1 or -1 with equal probability.
  double sign() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace espectra
