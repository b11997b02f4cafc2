#pragma once
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace nanotomo {

/// SplitMix64 output finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stable key for a double, so grid coordinates can address random streams.
inline std::uint64_t key_of(double x) noexcept {
  if (x == 0.0)
    x = 0.0; // fold -0.0 onto +0.0
  return std::bit_cast<std::uint64_t>(x);
}

/// Order-sensitive hash of a tuple of 64-bit words.
inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t w : words)
    h = mix64(h ^ mix64(w + 0x9E3779B97F4A7C15ULL));
  return h;
}

/// Counter-based random bit generator: the n-th output is a pure function of
/// (key, n). Independent streams are obtained by keying on cell coordinates,
/// so results never depend on the order in which cells are processed.
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

} // namespace nanotomo
