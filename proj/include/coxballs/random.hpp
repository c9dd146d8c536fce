#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "core.hpp"

namespace coxballs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Philox4x32-10 counter-based generator, exposed as a 64-bit URBG.
/// The 128-bit counter is (block index, stream id); the key comes from the seed.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;

  Philox4x32(std::uint64_t key, std::uint64_t stream) {
    key_ = {static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    ctr_ = {0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) {
      out_ = bijection(ctr_, key_);
      if (++ctr_[0] == 0) ++ctr_[1];
      pos_ = 0;
    }
    const int i = 2 * pos_++;
    return (static_cast<std::uint64_t>(out_[i + 1]) << 32) | out_[i];
  }

  /// The raw 10-round bijection; public for known-answer tests.
  static Block bijection(Block c, std::array<std::uint32_t, 2> k) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
      c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
      k[0] += 0x9E3779B9u;
      k[1] += 0xBB67AE85u;
    }
    return c;
  }

 private:
  std::array<std::uint32_t, 2> key_{};
  Block ctr_{};
  Block out_{};
  int pos_ = 2;
};

/// One independent random stream. Replicate i of a run with master seed s
/// always draws from stream (s, i), whatever thread executes it.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : engine_(splitmix64(master_seed), splitmix64(stream_id ^ 0x5851F42D4C957F2DULL)) {}

  Philox4x32& engine() { return engine_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() { return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52; }

  double normal() { return normal_(engine_); }

  double exponential() { return -std::log(uniform_open()); }

  std::uint64_t poisson(double mean) {
    if (!(mean > 0)) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(engine_);
  }

  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0) return 0;
    if (p >= 1) return n;
    std::binomial_distribution<std::uint64_t> dist(n, p);
    return dist(engine_);
  }

  double gamma(double shape) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return dist(engine_);
  }

  /// Poisson(mean) conditioned on being at least 1.
  std::uint64_t zero_truncated_poisson(double mean) {
    if (mean > 1.0) {
      for (;;) {
        auto k = poisson(mean);
        if (k > 0) return k;
      }
    }
    double u = uniform_open();
    double p = mean / std::expm1(mean);  // P(K = 1)
    std::uint64_t k = 1;
    double cum = p;
    while (u > cum && k < 1000) {
      p *= mean / static_cast<double>(k + 1);
      ++k;
      cum += p;
    }
    return k;
  }

  /// Uniform direction on S^{d-1}.
  Point direction(int d) {
    Point p{0, 0, 0};
    if (d == 1) {
      p[0] = uniform() < 0.5 ? -1.0 : 1.0;
      return p;
    }
    double n = 0;
    do {
      for (int i = 0; i < d; ++i) p[i] = normal();
      n = norm(p, d);
    } while (n == 0);
    return scale(p, 1.0 / n);
  }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Survival function of the chi distribution with d degrees of freedom.
inline double chi_survival(int d, double s) {
  if (s <= 0) return 1.0;
  switch (d) {
    case 1: return std::erfc(s / std::sqrt(2.0));
    case 2: return std::exp(-0.5 * s * s);
    default:
      return std::erfc(s / std::sqrt(2.0)) + std::sqrt(2.0 / kPi) * s * std::exp(-0.5 * s * s);
  }
}

/// Unnormalized tail integral of s^{d-1} e^{-s^2/2} over (a, inf).
inline double chi_tail_mass(int d, double a) {
  const double g = std::sqrt(kPi / 2.0) * std::erfc(a / std::sqrt(2.0));
  switch (d) {
    case 1: return g;
    case 2: return std::exp(-0.5 * a * a);
    default: return a * std::exp(-0.5 * a * a) + g;
  }
}

/// Draw from the chi_d law conditioned on exceeding a.
inline double sample_chi_tail(int d, double a, RandomStream& rng) {
  if (a < 1.0) {
    for (;;) {
      double s2 = 0;
      for (int i = 0; i < d; ++i) {
        double z = rng.normal();
        s2 += z * z;
      }
      if (s2 > a * a) return std::sqrt(s2);
    }
  }
  if (d == 2) return std::sqrt(a * a + 2.0 * rng.exponential());
  if (d == 1) {
    for (;;) {
      double s = std::sqrt(a * a + 2.0 * rng.exponential());
      if (rng.uniform() * s <= a) return s;
    }
  }
  // d = 3: propose s with density proportional to s^3 e^{-s^2/2} on (a, inf),
  // i.e. t = s^2 - a^2 from the mixture 2a^2 Exp(1/2) + 4 Gamma(2, 2); accept w.p. a/s.
  const double w_exp = 2 * a * a, w_gam = 4.0;
  for (;;) {
    double t = rng.uniform() * (w_exp + w_gam) < w_exp ? 2.0 * rng.exponential()
                                                        : 2.0 * rng.gamma(2.0);
    double s = std::sqrt(a * a + t);
    if (rng.uniform() * s <= a) return s;
  }
}

}  // namespace coxballs
