#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

namespace ali {

// Counter-free splitmix64 generator. Self-contained so that streams are
// bit-reproducible across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n >= 1.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; the spare keeps draws paired.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; `salt` separates substreams of one parent.
  Rng fork(std::uint64_t salt) {
    Rng child(next_u64() ^ (salt * 0x9e3779b97f4a7c15ull));
    return child;
  }

  friend std::ostream& operator<<(std::ostream& os, const Rng& r) {
    os << r.state_ << ' ' << (r.has_spare_ ? 1 : 0) << ' ';
    os.write(reinterpret_cast<const char*>(&r.spare_), sizeof(double));
    return os;
  }
  friend std::istream& operator>>(std::istream& is, Rng& r) {
    int spare = 0;
    is >> r.state_ >> spare;
    is.get();
    is.read(reinterpret_cast<char*>(&r.spare_), sizeof(double));
    r.has_spare_ = spare != 0;
    return is;
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ali
