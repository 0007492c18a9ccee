#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbmd {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 6.283185307179586476925286766559;
inline constexpr double log_two_pi = 1.8378770664093454836;

// numeric_error: an evaluation left its valid regime (overflow, residue blow-up, ...)
// data_error: malformed or inconsistent inputs (files, dimension mismatches, ...)
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using AngleVector = std::vector<double>;

// wrap into [0, 2pi)
inline double normalize_angle(double theta) {
  double t = std::fmod(theta, two_pi);
  if (t < 0.0) t += two_pi;
  if (t >= two_pi) t = 0.0;  // the += can round back up to 2pi
  return t;
}

// signed wrapped difference a-b in [-pi, pi)
inline double angle_difference(double a, double b) {
  double d = std::fmod(a - b, two_pi);
  if (d < -pi) d += two_pi;
  if (d >= pi) d -= two_pi;
  return d;
}

inline void normalize_angles(std::span<double> v) {
  for (auto& x : v) x = normalize_angle(x);
}

// squared geodesic distance on the flat torus
inline double geodesic_dist2(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw data_error("geodesic_dist2: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = angle_difference(a[i], b[i]);
    s += d * d;
  }
  return s;
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}
}  // namespace detail

// Seeded uniform stream. The generator is xoshiro256++ with splitmix64 state
// expansion; this choice is part of the file-format/reproducibility contract
// and must not change between releases.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = detail::splitmix64(x);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ULL;
  }

  std::uint64_t next_u64() {
    std::uint64_t result = detail::rotl64(s_[0] + s_[3], 23) + s_[0];
    std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl64(s_[3], 45);
    return result;
  }

  // uniform on [0,1) with 53 random bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // unbiased integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // standard normal via the polar method; the spare value is discarded so the
  // draw count per call is variable but the stream stays reproducible
  double normal() {
    for (;;) {
      double v1 = 2.0 * uniform() - 1.0;
      double v2 = 2.0 * uniform() - 1.0;
      double s = v1 * v1 + v2 * v2;
      if (s > 0.0 && s < 1.0) return v1 * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // independent substream derived from (seed, stream); used for per-repeat rngs
  RandomSource fork(std::uint64_t stream) const {
    std::uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return RandomSource(detail::splitmix64(x));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

struct KahanAccumulator {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    double y = x - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// compensated sum with a fixed blocking scheme so the result does not depend
// on how callers might chunk the work; keeps likelihood totals reproducible
template <class F>
double deterministic_sum(std::size_t n, F&& term) {
  constexpr std::size_t block = 4096;
  KahanAccumulator outer;
  std::size_t i = 0;
  while (i < n) {
    KahanAccumulator inner;
    std::size_t end = std::min(n, i + block);
    for (; i < end; ++i) inner.add(term(i));
    outer.add(inner.value());
  }
  return outer.value();
}

inline double deterministic_sum(std::span<const double> xs) {
  return deterministic_sum(xs.size(), [&](std::size_t i) { return xs[i]; });
}

inline double logsumexp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = deterministic_sum(xs.size(),
                               [&](std::size_t i) { return std::exp(xs[i] - m); });
  return m + std::log(s);
}

}  // namespace cbmd
