#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

// Deterministic random streams. Standard-library distributions are
// implementation-defined, so everything that must reproduce byte-identical
// output across toolchains is generated here: xoshiro256** for the stream,
// splitmix64 for seeding/key mixing, explicit uniform/normal transforms.

namespace svl::rng {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Collapses an arbitrary key (seed, purpose tag, indices, ...) into one
// 64-bit stream id. Order-sensitive.
inline uint64_t mix_key(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8f1bbcdcbfa53e0bULL;
  for (uint64_t p : parts) {
    h ^= p;
    (void)splitmix64(h);
    h = splitmix64(h);
  }
  return h;
}

class Stream {
 public:
  explicit Stream(uint64_t key) {
    uint64_t sm = key;
    for (auto& word : s_) word = splitmix64(sm);
  }

  Stream(std::initializer_list<uint64_t> key_parts) : Stream(mix_key(key_parts)) {}

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound), bound > 0. Rejection-free enough for our
  // bounds (bias < 2^-32 for bound < 2^32); uses the high bits.
  uint64_t uniform_int(uint64_t bound) {
    return uint64_t((__uint128_t(next_u64()) * bound) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller, no spare caching (keeps the state trivially serializable).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> s_{};
};

}  // namespace svl::rng
