#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsim {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a path of tags
// (round, client id, purpose...). Same inputs always give the same seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = mix64(base);
  for (std::uint64_t t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags used across modules.
namespace stream {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t sample = 2;
inline constexpr std::uint64_t local = 3;
inline constexpr std::uint64_t personal = 4;
inline constexpr std::uint64_t data = 5;
}  // namespace stream

}  // namespace fedsim
