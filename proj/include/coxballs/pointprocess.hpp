#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "core.hpp"
#include "laws.hpp"
#include "measures.hpp"
#include "random.hpp"

namespace coxballs {

enum class Scenario { local, global };

inline std::string to_string(Scenario s) { return s == Scenario::local ? "local" : "global"; }

/// kappa(rho) = c_kappa rho^{-u}, lambda(rho) = c_lambda rho^{-v}.
struct ScalingLaw {
  Scenario scenario = Scenario::local;
  double u = 0;
  double v = 2;
  double c_kappa = 1;
  double c_lambda = 1;

  void validate() const {
    require(std::isfinite(u) && std::isfinite(v), "scaling exponents must be finite");
    require(c_kappa > 0 && std::isfinite(c_kappa), "c_kappa must be positive (a vanishing cluster intensity is degenerate)");
    require(c_lambda > 0 && std::isfinite(c_lambda), "c_lambda must be positive");
    if (scenario == Scenario::local) {
      require(u == 0 && c_kappa == 1, "local scenario keeps the cluster intensity fixed: u = 0 and c_kappa = 1");
      require(v > 0, "local scenario needs v > 0 so that the cluster size grows");
    } else {
      require(u > 0, "global scenario needs u > 0 so that the cluster intensity grows");
    }
  }
  double kappa(double rho) const { return c_kappa * std::pow(rho, -u); }
  double lambda(double rho) const { return c_lambda * std::pow(rho, -v); }
};

struct ModelSpec {
  int d = 1;
  Kernel kernel;
  RadiusLaw radius;
  MarkLaw marks = MarkLaw::rademacher();
  ScalingLaw scaling;

  void validate() const {
    check_dimension(d);
    kernel.validate();
    radius.validate();
    scaling.validate();
    require(kernel.dim == d, "kernel dimension must match the model dimension");
    const double a = marks.alpha();
    require(radius.beta > d && radius.beta < a * d,
            "radius tail exponent must satisfy d < beta < alpha d (beta = " + std::to_string(radius.beta) +
                ", alpha = " + std::to_string(a) + ", d = " + std::to_string(d) + ")");
  }
};

/// Homogeneous Poisson points in a box.
inline std::vector<Point> sample_poisson(const Box& window, double intensity, RandomStream& rng) {
  std::vector<Point> out;
  const double vol = window.volume();
  require(std::isfinite(vol) && vol >= 0, "Poisson window must have finite volume");
  if (!(intensity > 0)) return out;
  const auto n = rng.poisson(intensity * vol);
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Point p{0, 0, 0};
    for (int k = 0; k < window.dim; ++k) p[k] = window.lo[k] + (window.hi[k] - window.lo[k]) * rng.uniform();
    out.push_back(p);
  }
  return out;
}

struct CenterRecord {
  Point y{0, 0, 0};
  std::uint64_t total_balls = 0;  // cluster size N; only meaningful when enumerated
  bool enumerated = true;         // false for far centers reached through the dominating process
};

struct BallRecord {
  std::uint32_t cluster = 0;
  Point x{0, 0, 0};
  double r = 0;
  double m = 0;
};

struct Realization {
  int dim = 1;
  double rho = 0;
  Box target;
  double r_max = INFINITY;
  bool windowed = false;
  double region_radius = 0;  // near-region radius, or center-window reach when windowed
  std::vector<CenterRecord> centers;
  std::vector<BallRecord> balls;      // balls hitting the target box
  std::vector<BallRecord> discarded;  // filled only on request
  std::uint64_t discarded_count = 0;
  std::uint64_t enumerated_total = 0;  // sum of cluster sizes over enumerated centers
  double enumerated_volume = 0;        // volume of the enumerated center region
};

struct SamplerOptions {
  double r_max = INFINITY;  // radius cap; infinite means untruncated
  bool windowed = false;    // enumerate every center within r_max + kernel reach of the target
  double kernel_eps = 1e-6;
  bool keep_discarded = false;
};

/// Volume of box + B(0, w) (Steiner formula for boxes).
inline double inflated_box_volume(const Box& b, double w) {
  const int d = b.dim;
  double e[3] = {0, 0, 0};
  for (int i = 0; i < d; ++i) e[i] = b.hi[i] - b.lo[i];
  switch (d) {
    case 1: return e[0] + 2 * w;
    case 2: return e[0] * e[1] + 2 * (e[0] + e[1]) * w + kPi * w * w;
    default:
      return e[0] * e[1] * e[2] + 2 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2]) * w +
             kPi * (e[0] + e[1] + e[2]) * w * w + 4.0 / 3.0 * kPi * w * w * w;
  }
}

namespace detail {

// Split of the candidate event for a center at distance 2t from the target:
// group A has radius >= t, group B has radius < t and offset beyond t.
struct CandidateSplit {
  double pA = 0;
  double pB = 0;
  double total() const { return pA + pB; }
};

inline CandidateSplit candidate_split(const ModelSpec& m, double rho, double t, double r_max) {
  CandidateSplit c;
  const double lo = std::max(t, rho * m.radius.r0);
  if (r_max > lo)
    c.pA = m.radius.survival_scaled(lo, rho) - (std::isfinite(r_max) ? m.radius.survival_scaled(r_max, rho) : 0.0);
  const double below = 1.0 - m.radius.survival_scaled(std::min(t, r_max), rho);
  if (below > 0) c.pB = below * m.kernel.tail_probability(t);
  return c;
}

// Mean number of far centers' candidates per unit radial distance is bounded by
// kappa lambda s_d l^{d-1} cbar(l) with cbar(l) = (4 rho r0 / l)^beta + 2^{d/2} e^{-l^2/(2 tau^2)}.
struct FarEnvelope {
  double L0 = 0;
  double tau = 0;        // Gaussian part scale; 0 for the uniform kernel
  double mass_power = 0;
  double mass_gauss = 0;
  double lead = 0;       // 4 rho r0
};

inline FarEnvelope far_envelope(const ModelSpec& m, double rho, const Box& target) {
  FarEnvelope e;
  const int d = m.d;
  const double kl = m.scaling.kappa(rho) * m.scaling.lambda(rho);
  const double RS = target.half_diagonal();
  const double h = m.kernel.bandwidth;
  e.lead = 4 * rho * m.radius.r0;
  const double base = std::max(2 * RS, e.lead);
  const double beta = m.radius.beta;
  if (m.kernel.family == KernelFamily::gaussian) {
    e.tau = std::sqrt(32.0) * h;
    e.L0 = base + 3 * e.tau;
    e.mass_gauss = kl * std::pow(2.0, 0.5 * d) * unit_sphere_area(d) * std::pow(e.tau, d) * chi_tail_mass(d, e.L0 / e.tau);
  } else {
    e.L0 = base + 4 * h;
  }
  e.mass_power = kl * std::pow(e.lead, beta) * unit_sphere_area(d) * std::pow(e.L0, d - beta) / (beta - d);
  return e;
}

inline double far_cbar(const FarEnvelope& e, int d, double beta, double l) {
  double c = std::pow(e.lead / l, beta);
  if (e.tau > 0) c += std::pow(2.0, 0.5 * d) * std::exp(-0.5 * l * l / (e.tau * e.tau));
  return c;
}

// Draw the candidates of one center and keep those whose ball hits the target box.
inline void process_candidates(const ModelSpec& m, double rho, const Point& y, std::uint32_t cluster,
                               std::uint64_t K, double t, double r_max, const CandidateSplit& split,
                               Realization& out, bool keep_discarded, RandomStream& rng) {
  const double c = split.total();
  for (std::uint64_t k = 0; k < K; ++k) {
    double r;
    Point z;
    if (rng.uniform() * c < split.pA) {
      r = m.radius.sample_between(std::max(t, rho * m.radius.r0), r_max, rho, rng);
      z = m.kernel.sample_offset(rng);
    } else {
      r = m.radius.sample_between(rho * m.radius.r0, std::min(t, r_max), rho, rng);
      z = m.kernel.sample_offset_beyond(t, rng);
    }
    const Point x = add(y, z);
    if (out.target.distance_to(x) <= r) {
      out.balls.push_back({cluster, x, r, m.marks.sample(rng)});
    } else {
      ++out.discarded_count;
      if (keep_discarded) out.discarded.push_back({cluster, x, r, 0.0});
    }
  }
}

inline Point uniform_in_ball(const Point& c, double R, int d, RandomStream& rng) {
  return add(c, scale(rng.direction(d), R * std::pow(rng.uniform(), 1.0 / d)));
}

}  // namespace detail

/// Draw the balls of the rescaled model that hit `target` (a box).
///
/// Default mode is exact on all of R^d: centers within the near radius are
/// enumerated, farther centers come from a dominating radial Poisson process
/// thinned to the exact probability of producing a candidate ball. Windowed
/// mode enumerates every center within r_max + kernel reach of the target
/// (needed when the conditional mean is nonzero).
inline Realization sample_realization(const ModelSpec& m, double rho, const Box& target, RandomStream& rng,
                                      const SamplerOptions& opt = {}) {
  require(rho > 0 && rho < 1, "scale rho must lie in (0, 1)");
  require(target.dim == m.d, "target dimension must match the model");
  for (int i = 0; i < m.d; ++i)
    require(std::isfinite(target.lo[i]) && std::isfinite(target.hi[i]), "target box must be bounded");
  require(opt.r_max > 0, "radius cap must be positive");
  const int d = m.d;
  const double kappa = m.scaling.kappa(rho), lambda = m.scaling.lambda(rho);
  Realization out;
  out.dim = d;
  out.rho = rho;
  out.target = target;
  out.r_max = opt.r_max;
  out.windowed = opt.windowed;
  const Point cS = target.center();

  auto enumerate_center = [&](const Point& y) {
    const double D = target.distance_to(y);
    const double t = 0.5 * D;
    const auto split = detail::candidate_split(m, rho, t, opt.r_max);
    const auto N = rng.poisson(lambda);
    const auto K = rng.binomial(N, split.total());
    const auto idx = static_cast<std::uint32_t>(out.centers.size());
    out.centers.push_back({y, N, true});
    out.enumerated_total += N;
    detail::process_candidates(m, rho, y, idx, K, t, opt.r_max, split, out, opt.keep_discarded, rng);
  };

  if (opt.windowed) {
    if (!std::isfinite(opt.r_max))
      throw ValidationError("windowed sampling needs a finite radius cap (set truncation)");
    const double w = opt.r_max + m.kernel.reach(opt.kernel_eps);
    out.region_radius = w;
    out.enumerated_volume = inflated_box_volume(target, w);
    const Box outer = target.inflated(w);
    for (const Point& y : sample_poisson(outer, kappa, rng))
      if (target.distance_to(y) <= w) enumerate_center(y);
    return out;
  }

  const auto env = detail::far_envelope(m, rho, target);
  out.region_radius = env.L0;
  out.enumerated_volume = unit_ball_volume(d) * std::pow(env.L0, d);
  const auto n_near = rng.poisson(kappa * out.enumerated_volume);
  for (std::uint64_t i = 0; i < n_near; ++i) enumerate_center(detail::uniform_in_ball(cS, env.L0, d, rng));

  const double beta = m.radius.beta;
  const double mass = env.mass_power + env.mass_gauss;
  const auto n_far = rng.poisson(mass);
  for (std::uint64_t i = 0; i < n_far; ++i) {
    double l;
    if (rng.uniform() * mass < env.mass_power)
      l = env.L0 * std::pow(rng.uniform_open(), -1.0 / (beta - d));
    else
      l = env.tau * sample_chi_tail(d, env.L0 / env.tau, rng);
    const Point y = add(cS, scale(rng.direction(d), l));
    const double t = 0.5 * target.distance_to(y);
    const auto split = detail::candidate_split(m, rho, t, opt.r_max);
    const double lc = lambda * split.total();
    const double accept = -std::expm1(-lc) / (lambda * detail::far_cbar(env, d, beta, l));
    if (rng.uniform() >= accept) continue;
    const auto K = rng.zero_truncated_poisson(lc);
    const auto idx = static_cast<std::uint32_t>(out.centers.size());
    out.centers.push_back({y, K, false});
    detail::process_candidates(m, rho, y, idx, K, t, opt.r_max, split, out, opt.keep_discarded, rng);
  }
  return out;
}

/// Reference sampler: every center in the inflated box, every ball drawn and
/// tested. Slow; used as an independent check of sample_realization.
inline Realization sample_realization_direct(const ModelSpec& m, double rho, const Box& target, double center_reach,
                                             RandomStream& rng) {
  Realization out;
  out.dim = m.d;
  out.rho = rho;
  out.target = target;
  out.windowed = true;
  out.region_radius = center_reach;
  const Box outer = target.inflated(center_reach);
  out.enumerated_volume = outer.volume();
  const double lambda = m.scaling.lambda(rho);
  for (const Point& y : sample_poisson(outer, m.scaling.kappa(rho), rng)) {
    const auto N = rng.poisson(lambda);
    const auto idx = static_cast<std::uint32_t>(out.centers.size());
    out.centers.push_back({y, N, true});
    out.enumerated_total += N;
    for (std::uint64_t k = 0; k < N; ++k) {
      const Point x = add(y, m.kernel.sample_offset(rng));
      const double r = sample_radius(m.radius, rho, rng);
      if (target.distance_to(x) <= r)
        out.balls.push_back({idx, x, r, m.marks.sample(rng)});
      else
        ++out.discarded_count;
    }
  }
  return out;
}

/// Upper bound on E|field mass| carried by balls with radius above r_max:
/// kappa lambda v_d ||mu|| E|m| rho^d int_{r_max/rho}^inf r^d f(r) dr.
inline double truncation_bias_bound(const ModelSpec& m, double rho, const TestMeasure& mu, double r_max) {
  if (!std::isfinite(r_max)) return 0.0;
  const int d = m.d;
  return m.scaling.kappa(rho) * m.scaling.lambda(rho) * unit_ball_volume(d) * mu.total_variation() *
         m.marks.abs_mean() * std::pow(rho, d) * m.radius.tail_moment(d, r_max / rho);
}

/// Bound on the mean absolute fluctuation lost by ignoring centers outside the
/// windowed sampler's center window (field plus centering terms).
inline double center_window_bias_bound(const ModelSpec& m, double rho, const TestMeasure& mu, double kernel_eps = 1e-6) {
  const int d = m.d;
  const double tail = m.kernel.tail_probability(m.kernel.reach(kernel_eps));
  return 2 * m.scaling.kappa(rho) * m.scaling.lambda(rho) * unit_ball_volume(d) * mu.total_variation() *
         m.marks.abs_mean() * std::pow(rho, d) * m.radius.moment(d) * tail;
}

/// Smallest radius cap whose truncation bias bound is at most `target`.
inline double auto_truncation_radius(const ModelSpec& m, double rho, const TestMeasure& mu, double target) {
  require(target > 0, "truncation target must be positive");
  const int d = m.d;
  const double K = m.scaling.kappa(rho) * m.scaling.lambda(rho) * unit_ball_volume(d) * mu.total_variation() *
                   m.marks.abs_mean() * std::pow(rho, d);
  const double beta = m.radius.beta;
  if (!(K > 0)) return rho * m.radius.r0;
  // K C_beta T^{d-beta}/(beta-d) = target
  const double T = std::pow(target * (beta - d) / (K * m.radius.C_beta()), 1.0 / (d - beta));
  return rho * std::max(T, m.radius.r0);
}

/// Mean number of balls with radius > 1 containing the origin.
inline double expected_large_balls(const ModelSpec& m, double rho, double r_max = INFINITY) {
  const int d = m.d;
  const double beta = m.radius.beta;
  const double lo = std::max(1.0, rho * m.radius.r0);
  if (r_max <= lo) return 0.0;
  const double upper = std::isfinite(r_max) ? std::pow(r_max, d - beta) : 0.0;
  return m.scaling.kappa(rho) * m.scaling.lambda(rho) * unit_ball_volume(d) * beta *
         std::pow(rho * m.radius.r0, beta) * (std::pow(lo, d - beta) - upper) / (beta - d);
}

/// Balls with radius > 1 containing the origin; the target box must contain the origin.
inline std::uint64_t count_large_balls(const Realization& real) {
  const Point o{0, 0, 0};
  require(real.target.contains(o), "large-ball counting needs a target box containing the origin");
  std::uint64_t n = 0;
  for (const auto& b : real.balls)
    if (b.r > 1.0 && norm(b.x, real.dim) < b.r) ++n;
  return n;
}

}  // namespace coxballs
