#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace medlabel {

// Deterministic random stream. The raw engine (mt19937_64) is fully specified
// by the standard; the distributions here are hand-rolled because the standard
// library ones are implementation-defined and would break byte-identical
// reproducibility guarantees.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller, one cached value.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // N(0, sigma^2) rejected outside [-cut, cut].
  double truncated_normal(double sigma, double cut) {
    for (;;) {
      double x = sigma * normal();
      if (std::abs(x) <= cut) return x;
    }
  }

  // Child stream derived from the original seed and up to three tags.
  // Independent of how much of this stream has been consumed.
  Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = seed_;
    s = mix(s ^ mix(a + 0x9e3779b97f4a7c15ull));
    s = mix(s ^ mix(b + 0x6a09e667f3bcc909ull));
    s = mix(s ^ mix(c + 0xbb67ae8584caa73bull));
    return Rng(s);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// Fisher-Yates shuffle driven by an Rng stream.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.uniform_int(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace medlabel
