#pragma once

#include <array>
#include <cstdint>

namespace iclkit {

// SplitMix64 (Steele, Lea, Flood 2014). Used only to expand a 64-bit seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t state_;
};

// xoshiro256** 1.0 (Blackman, Vigna). State words are the first four
// SplitMix64 outputs for the seed. All randomness in the toolkit (random
// sampling, synthetic noise) comes from this generator so results
// reproduce across implementations.
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, bound) by rejection on the top of the 64-bit range:
  // draws x until x >= (2^64 - bound) % bound, then returns x % bound.
  std::uint64_t bounded(std::uint64_t bound);
  // Uniform in [0, 1) from the top 53 bits.
  double uniform();

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace iclkit
