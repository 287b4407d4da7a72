#pragma once

#include <cstdint>

namespace scenario_rag {

// SplitMix64 (Steele, Lea, Flood 2014). Used to expand a 64-bit seed into
// generator state.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// xoshiro256** 1.0 (Blackman, Vigna). All sampling helpers below are defined
// in terms of next() only, so streams reproduce bit-for-bit on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
  }

  // Independent stream for item `index` of a seeded collection.
  static Rng stream(std::uint64_t seed, std::uint64_t index) { return Rng(seed ^ index); }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Symmetric bounded jitter in [-scale, scale).
  double jitter(double scale) { return scale * (2.0 * uniform() - 1.0); }

  // Uniform integer in [lo, hi] via rejection-free multiply-shift (Lemire).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<unsigned __int128>(hi - lo) + 1;
    const auto product = static_cast<unsigned __int128>(next()) * span;
    return lo + static_cast<std::int64_t>(product >> 64);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
};

}  // namespace scenario_rag
