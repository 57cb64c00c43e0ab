#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace rdm {

// Deterministic PRNG (xoshiro256++ seeded via splitmix64). All randomness in
// the project flows through this class so that runs are reproducible
// bit-for-bit from a seed, independent of platform libstdc++ details.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const double u = uniform();
    const auto span = static_cast<double>(hi - lo + 1);
    auto k = static_cast<int64_t>(u * span);
    if (k > hi - lo) k = hi - lo;
    return lo + k;
  }

  // Standard normals via Box-Muller. Values are produced in pairs and any
  // unused second value is dropped, so consumption depends only on the call
  // sequence, never on parity carried across calls.
  void fill_normal(double* out, size_t n, double stddev = 1.0) {
    size_t i = 0;
    while (i < n) {
      const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double a = 6.283185307179586476925286766559 * u2;
      out[i++] = r * std::cos(a) * stddev;
      if (i < n) out[i++] = r * std::sin(a) * stddev;
    }
  }

  double normal(double stddev = 1.0) {
    double v;
    fill_normal(&v, 1, stddev);
    return v;
  }

  std::vector<double> normal_vec(size_t n, double stddev = 1.0) {
    std::vector<double> v(n);
    fill_normal(v.data(), n, stddev);
    return v;
  }

  // Derive an independent substream, e.g. one per dataset sequence. The
  // result depends only on (current state, stream id), not on call order,
  // which keeps parallel generation deterministic.
  Rng split(uint64_t stream) const {
    uint64_t x = s_[0] ^ rotl(s_[1], 13) ^ (stream * 0x9E3779B97f4A7C15ULL + 0x632BE59BD9B4E019ULL);
    Rng r(0);
    for (auto& si : r.s_) si = splitmix64(x);
    return r;
  }

  std::array<uint64_t, 4> state() const { return s_; }
  static Rng from_state(const std::array<uint64_t, 4>& st) {
    Rng r(0);
    r.s_ = st;
    return r;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9E3779B97f4A7C15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> s_{};
};

}  // namespace rdm
