#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace drbse {

// Named, splittable random streams. A master seed plus a purpose tag (and an
// optional trial index) deterministically derive an independent substream, so
// e.g. noise draws do not shift when the bad-data selection changes.
//
// The generator is std::mt19937_64 (bit-exact per the standard); the Gaussian
// uses an explicit Marsaglia polar transform because the distribution adapters
// in <random> are implementation-defined.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::string_view purpose, std::uint64_t index = 0)
      : engine_(derive(master_seed, purpose, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform over [0, n) without modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = n ? UINT64_MAX - UINT64_MAX % n : 0;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal, Marsaglia polar method.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
    for (char c : purpose) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    std::uint64_t state = seed;
    std::uint64_t mixed = splitmix(state) ^ h;
    mixed ^= splitmix(state) + index * 0x9e3779b97f4a7c15ULL;
    std::uint64_t s2 = mixed;
    return splitmix(s2);
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace drbse
