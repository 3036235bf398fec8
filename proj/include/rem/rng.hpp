#pragma once

#include <cmath>
#include <cstdint>

namespace rem {

// Counter-based generator: output i is a splitmix64-style hash of
// key(seed, stream) + i.  Streams with the same seed are independent, and a
// draw depends only on (seed, stream, position), so runs are reproducible
// across platforms regardless of draw interleaving elsewhere.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_(finalize(seed) + finalize(stream ^ 0x5851f42d4c957f2dULL)) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return finalize(key_ + counter_);
  }

  // Uniform on (0, 1]; never returns 0 so logs are safe.
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double gumbel() { return -std::log(-std::log(uniform())); }

 private:
  static std::uint64_t finalize(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rem
