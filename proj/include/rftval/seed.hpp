#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rftval {

// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of indices, e.g.
/// mix_seed(master, {realization, subject, scan}). The result depends only on
/// the values, never on the order in which callers evaluate them.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags keep independent consumers of one master seed apart.
namespace stream {
inline constexpr std::uint64_t noise = 0x6e6f697365ULL;
inline constexpr std::uint64_t design = 0x64657369676eULL;
inline constexpr std::uint64_t group_draw = 0x67726f7570ULL;
inline constexpr std::uint64_t permutation = 0x7065726dULL;
}  // namespace stream

using Engine = std::mt19937_64;

}  // namespace rftval
