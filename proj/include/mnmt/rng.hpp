#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mnmt {

// Seeded generator used everywhere. mt19937_64 output is pinned by the
// standard, and the distributions below are hand-rolled, so a given seed
// produces the same stream on any platform/compiler.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0,1)
  float uniform() {
    return static_cast<float>(gen_() >> 40) * (1.0f / 16777216.0f);
  }

  // uniform in [lo,hi)
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0,n), n >= 1 (modulo bias unobservable for tiny n)
  size_t below(size_t n) { return static_cast<size_t>(gen_() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Stable child stream: same (seed, label) -> same child on every run.
  Rng child(const std::string& label) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over the label
    for (unsigned char c : label) {
      h ^= c;
      h *= 1099511628211ull;
    }
    uint64_t z = seed_ ^ h;  // mix with parent seed via splitmix64
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

inline uint64_t fnv1a64(const void* data, size_t n,
                        uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

}  // namespace mnmt
