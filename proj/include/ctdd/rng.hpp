#ifndef CTDD_RNG_HPP
#define CTDD_RNG_HPP

#include <cstdint>
#include <random>

namespace ctdd {

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Decorrelated substream. Chains, batch elements and tools each get their own
// stream id so parallel execution matches sequential execution exactly.
inline Rng make_stream(uint64_t seed, uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1)));
}

inline Rng make_stream(uint64_t seed, uint64_t a, uint64_t b) {
  return make_stream(splitmix64(seed ^ splitmix64(a)), b);
}

}  // namespace ctdd

#endif
