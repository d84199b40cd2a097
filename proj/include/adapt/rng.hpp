#pragma once

#include <cstdint>
#include <random>

namespace adapt {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream tags for child seeds.
enum class Stream : std::uint64_t {
  kMask = 1,
  kNoise = 2,
  kReplace = 3,
  kShuffle = 4,
  kDropout = 5,
  kInit = 6,
  kClassifierInit = 7,
};

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  return mix_seed(seed, 0xA5A5000000000000ULL | static_cast<std::uint64_t>(s));
}

}  // namespace adapt
