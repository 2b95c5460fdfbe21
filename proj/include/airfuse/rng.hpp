#pragma once

#include <cmath>
#include <cstdint>

namespace airfuse {

// Counter-based generator: every draw is a pure function of (key, counter),
// so independently keyed streams reproduce bit-exactly no matter how work is
// split across threads.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(splitmix64(key)) {}
  CounterRng(std::uint64_t key, std::uint64_t stream)
      : key_(splitmix64(splitmix64(key) ^ splitmix64(stream ^ 0xA0761D6478BD642FULL))) {}

  // Derived stream for e.g. a (cell, day) pair; does not advance this stream.
  CounterRng fork(std::uint64_t a, std::uint64_t b = 0) const {
    return CounterRng(key_ ^ splitmix64(a * 0xE7037ED1A0B428DBULL + 1),
                      b + 0x8EBC6AF09C88C6E3ULL);
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  // Uniform on (0,1), never exactly 0 or 1.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Index into a discrete distribution given by (unnormalized) weights.
  template <typename Vec>
  int pick_weighted(const Vec& w) {
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(w.size()); ++i) total += w[i];
    double u = uniform() * total;
    for (int i = 0; i < static_cast<int>(w.size()); ++i) {
      u -= w[i];
      if (u <= 0.0) return i;
    }
    return static_cast<int>(w.size()) - 1;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace airfuse
