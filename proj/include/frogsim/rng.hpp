#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace frogsim {

/// SplitMix64 output finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Folds a sequence of words into one stream key. Order matters.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (std::uint64_t w : words) h = mix64(h ^ (w + 0x9E3779B97F4A7C15ULL));
  return h;
}

/// Tags separating the independent random streams of one replica.
enum class StreamTag : std::uint64_t {
  kOffspring = 0x6f6666,
  kSleepers = 0x736c6565,
  kFrog = 0x66726f67,
  kTieBreak = 0x746965,
  kBrwBirth = 0x62697274,
  kReplica = 0x7265706c,
  kRay = 0x726179,
};

/// Small counter-style generator used for the many keyed per-vertex and
/// per-frog streams. Satisfies UniformRandomBitGenerator so the <random>
/// distributions can consume it.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr SplitMix64() noexcept = default;
  constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  constexpr std::uint64_t state() const noexcept { return state_; }
  friend constexpr bool operator==(const SplitMix64&, const SplitMix64&) = default;

 private:
  std::uint64_t state_ = 0;
};

/// Stream keyed by (seed, tag, words...). Pure function of its arguments.
inline SplitMix64 keyed_stream(std::uint64_t seed, StreamTag tag,
                               std::initializer_list<std::uint64_t> words = {}) {
  std::uint64_t h = hash_words({seed, static_cast<std::uint64_t>(tag)});
  for (std::uint64_t w : words) h = mix64(h ^ (w + 0x9E3779B97F4A7C15ULL));
  return SplitMix64(h);
}

/// Uniform double in [0, 1) with 53 random bits.
template <class Gen>
double uniform01(Gen& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Count of arrivals in [0, rate] of a unit-rate Poisson process driven by
/// `gen`. Monotone in `rate` for a fixed stream: raising the rate only adds
/// arrivals.
template <class Gen>
std::uint32_t thinned_poisson(Gen& gen, double rate) {
  std::uint32_t count = 0;
  double t = 0.0;
  while (true) {
    // Inverse-CDF exponential gap; 1 - u lies in (0, 1].
    t += -std::log1p(-uniform01(gen));
    if (t > rate) return count;
    ++count;
  }
}

}  // namespace frogsim
