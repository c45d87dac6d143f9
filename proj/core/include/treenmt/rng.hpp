#ifndef TREENMT_RNG_HPP
#define TREENMT_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace treenmt {

inline uint64_t splitmix64_mix(uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream (splitmix64). All randomness in the toolkit
// flows from a single root seed, fanned out per component through
// from_label(), so no two components ever consume the same stream.
// Distributions are hand-rolled on top of next_u64() to keep outputs
// identical across standard libraries.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(splitmix64_mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static RngStream from_label(uint64_t root_seed, std::string_view label) {
    return RngStream(splitmix64_mix(root_seed) ^ fnv1a64(label));
  }

  RngStream derive(std::string_view label) const {
    return RngStream(state_ ^ fnv1a64(label));
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  template <class Vec>
  void shuffle(Vec& v) {
    if (v.size() < 2) return;
    for (size_t i = v.size() - 1; i > 0; --i) {
      size_t j = static_cast<size_t>(uniform_int(i + 1));
      using std::swap;
      swap(v[i], v[j]);
    }
  }

  // k distinct indices out of [0, n), in draw order. k <= n.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(uniform_int(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  uint64_t state_;
};

}  // namespace treenmt

#endif  // TREENMT_RNG_HPP
