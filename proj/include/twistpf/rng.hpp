#pragma once

#include <cmath>
#include <cstdint>

namespace twistpf {

// xoshiro256** with splitmix64 seeding. We carry our own generator and
// transforms so that streams are bit-reproducible across platforms and
// standard library versions, and so that substreams can be derived cheaply
// per (seed, step, particle) for schedule-independent parallelism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1]
  double uniform_oc() { return 1.0 - uniform(); }

  // uniform integer on {0, ..., n-1}
  std::uint64_t uniform_index(std::uint64_t n) {
    // rejection-free modulo bias is negligible for desk-scale n, but keep it exact
    const std::uint64_t threshold = (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() {
    // Box-Muller, cosine branch only; two fresh uniforms per variate keeps
    // the stream stateless between calls.
    const double u1 = uniform_oc();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Marsaglia-Tsang gamma(shape, scale = 1)
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform_oc();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform_oc();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

// Deterministic substream derivation: the resulting stream depends only on
// the tuple (seed, a, b, c), never on call order.
inline Rng substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t x = seed;
  std::uint64_t h = Rng::splitmix64(x);
  x = h ^ (a + 0x9e3779b97f4a7c15ULL);
  h = Rng::splitmix64(x);
  x = h ^ (b + 0xbf58476d1ce4e5b9ULL);
  h = Rng::splitmix64(x);
  x = h ^ (c + 0x94d049bb133111ebULL);
  h = Rng::splitmix64(x);
  return Rng(h);
}

}  // namespace twistpf
