#pragma once

#include <cstdint>
#include <random>

namespace nca {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive decorrelated stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(master ^ mix64(a));
  s = mix64(s ^ mix64(b));
  return mix64(s ^ mix64(c));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(derive_seed(master, a, b, c));
}

template <class T>
T uniform(Rng& rng, T lo, T hi) {
  return std::uniform_real_distribution<T>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace nca
