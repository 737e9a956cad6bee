#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace mestlab {

/// SplitMix64 output finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a stream key from a master seed and a path of indices, e.g.
/// (seed, outer_rep, inner_rep). Different paths give unrelated keys.
inline std::uint64_t stream_key(std::uint64_t seed,
                                std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t index : path) {
    key = mix64(key ^ mix64(index + 0x9e3779b97f4a7c15ULL));
  }
  return key;
}

/// Counter-based generator: the i-th output is a pure function of (key, i),
/// so any variate can be reproduced without replaying the stream.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
      : key_(stream_key(seed, path)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return at(counter_++); }

  /// Output at an arbitrary position; does not advance the counter.
  result_type at(std::uint64_t position) const noexcept {
    return mix64(key_ + (position + 1) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mestlab
