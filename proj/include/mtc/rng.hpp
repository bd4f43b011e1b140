#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace mtc {

// Deterministic, self-contained RNG. Each subsystem draws from its own named
// stream derived from (master seed, stream name), so adding or removing draws
// in one subsystem never shifts another subsystem's sequence. Streams use
// xoshiro256++ seeded via splitmix64; normals use the polar method.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(uint64_t master_seed, const std::string& name) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over the stream name
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ull;
    }
    uint64_t x = master_seed ^ h;
    for (auto& s : s_) s = splitmix64(x);
    // avoid the all-zero state (splitmix64 makes this astronomically unlikely)
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
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

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal, polar method with one cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // integer in [0, n)
  uint64_t below(uint64_t n) {
    // multiply-shift; bias is negligible for our n (< 2^40)
    return (__uint128_t(next_u64()) * n) >> 64;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mtc
