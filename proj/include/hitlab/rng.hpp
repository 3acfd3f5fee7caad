#pragma once

#include <cstdint>
#include <random>

namespace hitlab {

namespace detail {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Identifies one reproducible random stream.
///
/// A stream is the pair (seed, stream_index). Ensemble members get
/// substreams whose index is a SplitMix64 hash of the parent index and the
/// member number, so a member's values never depend on how many other
/// members exist or which thread runs it.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_index = 0;

  RngStream substream(std::uint64_t i) const noexcept {
    return {seed, detail::mix64(detail::mix64(stream_index) ^ (i + 1))};
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

/// Generator for one stream: std::mt19937_64 seeded through std::seed_seq
/// with the four 32-bit halves of (seed, stream_index). Both algorithms are
/// fully specified by the C++ standard, so sequences are identical on every
/// conforming platform. Real-valued draws are built from raw 64-bit words
/// here rather than through <random> distributions, whose algorithms are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(RngStream stream) : engine_(make_engine(stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() {
    for (;;) {
      const double u = uniform();
      if (u > 0.0) return u;
    }
  }

  bool next_bit() {
    if (bits_left_ == 0) {
      bit_buffer_ = engine_();
      bits_left_ = 64;
    }
    const bool bit = (bit_buffer_ & 1U) != 0;
    bit_buffer_ >>= 1;
    --bits_left_;
    return bit;
  }

 private:
  static std::mt19937_64 make_engine(RngStream s) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(s.stream_index),
                      static_cast<std::uint32_t>(s.stream_index >> 32)};
    return std::mt19937_64(seq);
  }

  std::mt19937_64 engine_;
  std::uint64_t bit_buffer_ = 0;
  int bits_left_ = 0;
};

}  // namespace hitlab
