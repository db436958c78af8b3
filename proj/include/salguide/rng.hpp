#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace salguide {

// Deterministic RNG utilities. The engine is std::mt19937_64 (its output
// sequence is fixed by the standard), but all *mappings* from raw draws to
// values are hand-rolled here because the std distributions are free to vary
// across library implementations.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed plus tags (stream kind,
// epoch, example index, ...). Same inputs -> same stream, on every platform.
inline uint64_t derive_seed(uint64_t seed, std::initializer_list<uint64_t> tags) {
  uint64_t s = seed ^ 0x8f1bbcdcbfa53e0bull;
  splitmix64(s);
  uint64_t out = s;
  for (uint64_t t : tags) {
    s ^= t + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
    out = splitmix64(s);
  }
  return out;
}

inline uint64_t hash_str(const char* str) {
  // FNV-1a, used to tag streams by name.
  uint64_t h = 0xcbf29ce484222325ull;
  for (const char* p = str; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo of a 64-bit draw; the bias is ~n/2^64,
  // irrelevant at the sample counts used here and fully deterministic.
  uint64_t uniform_u64(uint64_t n) { return gen_() % n; }

  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_u64(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace salguide
