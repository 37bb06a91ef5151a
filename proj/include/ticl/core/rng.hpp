#pragma once

#include <cstdint>
#include <random>

namespace ticl::core {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic seed for the stream identified by (seed, key, sub). Streams
/// are addressed by counters, so results do not depend on evaluation order.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t key, std::uint64_t sub = 0) {
  return mix64(mix64(mix64(seed) ^ key) ^ (sub * 0xd1342543de82ef95ULL));
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::uint64_t key, std::uint64_t sub = 0) {
  return Rng(stream_seed(seed, key, sub));
}

}  // namespace ticl::core
