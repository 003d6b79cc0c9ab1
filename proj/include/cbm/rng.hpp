#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace cbm {

namespace detail {

// Stafford variant 13 finalizer (the SplitMix64 output function).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// Identity of one random substream: (run seed, epoch, image id).
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t item = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

// Reserved item ids for non-image substreams.
inline constexpr std::uint64_t kShuffleStream = 0xffffffffffffff01ULL;
inline constexpr std::uint64_t kInitStream = 0xffffffffffffff02ULL;
inline constexpr std::uint64_t kSyntheticStream = 0xffffffffffffff03ULL;

/// Counter-based generator: output i is a keyed hash of counter i, so a stream
/// depends only on its key and never on what other streams have drawn.
/// Satisfies UniformRandomBitGenerator. Distributions below are implemented
/// here rather than via <random> so results do not depend on the standard library.
class RngStream {
public:
  using result_type = std::uint64_t;

  explicit RngStream(StreamKey key) : key_(key), state_(derive(key)) {}
  RngStream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t item)
      : RngStream(StreamKey{seed, epoch, item}) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t x = state_ + detail::kGolden * (++counter_);
    return detail::mix64(detail::mix64(x) ^ (state_ >> 17));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t x = 0;
    do {
      x = (*this)();
    } while (x >= limit);
    return x % bound;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  const StreamKey& key() const noexcept { return key_; }
  std::uint64_t draws() const noexcept { return counter_; }

private:
  static std::uint64_t derive(const StreamKey& key) noexcept {
    std::uint64_t h = detail::mix64(key.seed + detail::kGolden);
    h = detail::mix64(h ^ (key.epoch + 0x632be59bd9b4e019ULL));
    h = detail::mix64(h ^ (key.item + 0x85157af5ULL * detail::kGolden));
    return h;
  }

  StreamKey key_;
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
};

}  // namespace cbm
