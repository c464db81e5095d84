#pragma once

#include <cstdint>
#include <random>

namespace e3dr {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix64(mix64(a, b), c);
}

// Maps a 64-bit word to [0, 1) with 53 bits of precision.
constexpr double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Stream tags, so that e.g. channel means and agent decisions never share a stream.
namespace stream {
inline constexpr std::uint64_t kRewards = 1;
inline constexpr std::uint64_t kChannelMeans = 2;
inline constexpr std::uint64_t kPopulation = 3;
inline constexpr std::uint64_t kAgents = 4;
}  // namespace stream

inline int uniform_index(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

}  // namespace e3dr
