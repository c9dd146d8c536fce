#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <string>

#include "core.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace coxballs {

/// psi(u) = e^{iu} - 1 - iu, accurate for small |u|.
inline cplx psi(double u) {
  const double s = std::sin(0.5 * u);
  double im;
  if (std::abs(u) < 0.25) {
    const double u2 = u * u;
    im = -u * u2 / 6.0 * (1 - u2 / 20.0 * (1 - u2 / 42.0 * (1 - u2 / 72.0 * (1 - u2 / 110.0))));
  } else {
    im = std::sin(u) - u;
  }
  return {-2.0 * s * s, im};
}

/// e^z - 1 without cancellation for small |z|.
inline cplx expm1c(cplx z) {
  const double a = z.real(), b = z.imag();
  const double sh = std::sin(0.5 * b);
  return {std::expm1(a) * std::cos(b) - 2.0 * sh * sh, std::exp(a) * std::sin(b)};
}

struct StableParams {
  double alpha = 2.0;
  double sigma = 1.0;
  double skew = 0.0;

  void validate() const {
    require(alpha > 1.0 && alpha <= 2.0, "stable index must lie in (1, 2]");
    require(sigma >= 0.0, "stable scale must be nonnegative");
    require(std::abs(skew) <= 1.0, "stable skewness must lie in [-1, 1]");
  }
  /// tan(pi alpha / 2) * b, with the Gaussian case exactly zero.
  double skew_tan() const { return alpha == 2.0 ? 0.0 : std::tan(kPi * alpha / 2.0) * skew; }
};

/// Oscillatory integral of (1 - cos r) r^{-1-gamma} over (0, inf), gamma in (0, 2).
/// Split at r = 1; the tail is 1/gamma - Re F(1+gamma, 1).
inline QuadResult<double> one_minus_cos_integral(double gamma, const QuadOptions& opt = {}) {
  require(gamma > 0 && gamma < 2, "one-minus-cos integral needs gamma in (0, 2)");
  auto head = integrate_left_singular<double>(
      [gamma](double r) {
        const double s = std::sin(0.5 * r) / r;
        return 2.0 * s * s * std::pow(r, 1.0 - gamma);
      },
      0.0, 1.0, 1.0 - gamma, opt.tightened(0.5));
  auto tail = oscillatory_power_tail(1.0 + gamma, 1.0, opt.tightened(0.5));
  QuadResult<double> out;
  out.value = head.value + 1.0 / gamma - tail.value.real();
  out.error_estimate = head.error_estimate + tail.error_estimate;
  out.evaluations = head.evaluations + tail.evaluations;
  out.converged = head.converged && tail.converged;
  return out;
}

/// Pareto radius law f(r) = beta r0^beta r^{-beta-1} on [r0, inf).
struct RadiusLaw {
  double beta = 1.5;
  double r0 = 1.0;

  void validate() const {
    require(beta > 0 && std::isfinite(beta), "radius tail exponent must be positive");
    require(r0 > 0 && std::isfinite(r0), "radius lower endpoint must be positive");
  }
  double C_beta() const { return beta * std::pow(r0, beta); }
  double C_0() const { return C_beta(); }
  double density(double r) const { return r < r0 ? 0.0 : C_beta() * std::pow(r, -beta - 1.0); }
  double survival(double t) const { return t <= r0 ? 1.0 : std::pow(r0 / t, beta); }
  /// P(rho R >= t).
  double survival_scaled(double t, double rho) const {
    return t <= rho * r0 ? 1.0 : std::pow(rho * r0 / t, beta);
  }
  /// Integral of r^d f(r) over (0, inf); finite for beta > d.
  double moment(int d) const {
    require(beta > d, "radius moment of order d needs beta > d");
    return beta * std::pow(r0, d) / (beta - d);
  }
  /// Integral of r^d f(r) over (T, inf).
  double tail_moment(int d, double T) const {
    if (!std::isfinite(T)) return 0.0;
    if (T <= r0) return moment(d);
    return C_beta() * std::pow(T, d - beta) / (beta - d);
  }
  /// Scaled radius rho R restricted to [lo, hi] (hi may be infinite).
  double sample_between(double lo, double hi, double rho, RandomStream& rng) const {
    const double s_lo = survival_scaled(lo, rho);
    const double s_hi = std::isfinite(hi) ? survival_scaled(hi, rho) : 0.0;
    const double u = s_hi + (s_lo - s_hi) * rng.uniform_open();
    const double r = rho * r0 * std::pow(u, -1.0 / beta);
    return std::clamp(r, std::max(lo, rho * r0), hi);
  }
};

/// rho * R with R ~ Pareto(beta, r0), by inversion.
inline double sample_radius(const RadiusLaw& law, double rho, RandomStream& rng) {
  return law.r0 * rho * std::pow(rng.uniform_open(), -1.0 / law.beta);
}

enum class KernelFamily { gaussian, uniform_ball };

inline std::string to_string(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "uniform-ball";
}

/// Translation-invariant cluster kernel k(x, y) = kappa0(x - y).
struct Kernel {
  KernelFamily family = KernelFamily::gaussian;
  double bandwidth = 1.0;
  int dim = 1;

  void validate() const {
    check_dimension(dim);
    require(bandwidth > 0 && std::isfinite(bandwidth), "kernel bandwidth must be positive");
  }
  double peak() const {
    if (family == KernelFamily::gaussian)
      return std::pow(2 * kPi * bandwidth * bandwidth, -0.5 * dim);
    return 1.0 / (unit_ball_volume(dim) * std::pow(bandwidth, dim));
  }
  double density(const Point& z) const {
    const double r = norm(z, dim);
    if (family == KernelFamily::gaussian)
      return peak() * std::exp(-0.5 * r * r / (bandwidth * bandwidth));
    return r <= bandwidth ? peak() : 0.0;
  }
  double eval(const Point& x, const Point& y) const { return density(sub(x, y)); }
  double eval(std::span<const double> x, std::span<const double> y) const {
    if (x.size() != static_cast<std::size_t>(dim) || y.size() != static_cast<std::size_t>(dim))
      throw ValidationError("kernel evaluation: point dimension does not match the kernel");
    Point a{0, 0, 0}, b{0, 0, 0};
    for (int i = 0; i < dim; ++i) {
      a[i] = x[i];
      b[i] = y[i];
    }
    return eval(a, b);
  }
  /// P(|offset| > q).
  double tail_probability(double q) const {
    if (q <= 0) return 1.0;
    if (family == KernelFamily::gaussian) return chi_survival(dim, q / bandwidth);
    if (q >= bandwidth) return 0.0;
    return 1.0 - std::pow(q / bandwidth, dim);
  }
  Point sample_offset(RandomStream& rng) const {
    Point p{0, 0, 0};
    if (family == KernelFamily::gaussian) {
      for (int i = 0; i < dim; ++i) p[i] = bandwidth * rng.normal();
      return p;
    }
    return scale(rng.direction(dim), bandwidth * std::pow(rng.uniform(), 1.0 / dim));
  }
  /// Offset conditioned on |offset| > q.
  Point sample_offset_beyond(double q, RandomStream& rng) const {
    if (q <= 0) return sample_offset(rng);
    if (family == KernelFamily::gaussian)
      return scale(rng.direction(dim), bandwidth * sample_chi_tail(dim, q / bandwidth, rng));
    const double f = std::pow(std::min(q / bandwidth, 1.0), dim);
    return scale(rng.direction(dim), bandwidth * std::pow(rng.uniform() * (1 - f) + f, 1.0 / dim));
  }
  /// Radius beyond which the offset mass is below eps: h sqrt(2 ln(1/eps)) for
  /// the Gaussian, h for the uniform ball.
  double reach(double eps = 1e-6) const {
    if (family == KernelFamily::gaussian) return bandwidth * std::sqrt(2.0 * std::log(1.0 / eps));
    return bandwidth;
  }
  ConvolutionKernel convolution() const {
    ConvolutionKernel c;
    c.bandwidth = bandwidth;
    if (family == KernelFamily::gaussian) {
      const double h = bandwidth;
      c.separable = true;
      c.density_1d = [h](double t) { return std::exp(-0.5 * t * t / (h * h)); };
      c.reach = 9.0 * h;
    } else {
      Kernel self = *this;
      c.separable = false;
      c.density = [self](const Point& z) { return self.density(z); };
      c.reach = bandwidth * 1.0001;
    }
    return c;
  }
};

/// Draw from S_alpha(sigma, b, 0) by the uniform-angle / exponential transform.
inline double sample_stable(const StableParams& p, RandomStream& rng) {
  if (p.alpha == 2.0) return std::sqrt(2.0) * p.sigma * rng.normal();
  const double a = p.alpha;
  const double t = p.skew_tan();
  const double B = std::atan(t) / a;
  const double S = std::pow(1.0 + t * t, 1.0 / (2.0 * a));
  const double V = kPi * (rng.uniform_open() - 0.5);
  const double W = rng.exponential();
  const double x = S * std::sin(a * (V + B)) / std::pow(std::cos(V), 1.0 / a) *
                   std::pow(std::cos(V - a * (V + B)) / W, (1.0 - a) / a);
  return p.sigma * x;
}

enum class MarkFamily { rademacher, gaussian, exact_stable, two_sided_pareto, dirac };

inline std::string to_string(MarkFamily f) {
  switch (f) {
    case MarkFamily::rademacher: return "rademacher";
    case MarkFamily::gaussian: return "gaussian";
    case MarkFamily::exact_stable: return "exact-stable";
    case MarkFamily::two_sided_pareto: return "two-sided-pareto";
    case MarkFamily::dirac: return "dirac";
  }
  return "?";
}

/// Mark distribution G. Every law carries a positive multiplier so that the law
/// of c*m is available for any family.
class MarkLaw {
 public:
  static MarkLaw rademacher() { return MarkLaw(MarkFamily::rademacher); }

  static MarkLaw gaussian(double scale) {
    require(scale > 0, "gaussian mark scale must be positive");
    MarkLaw m(MarkFamily::gaussian);
    m.p0_ = scale;
    return m;
  }

  static MarkLaw exact_stable(const StableParams& p) {
    p.validate();
    MarkLaw m(MarkFamily::exact_stable);
    m.stable_ = p;
    return m;
  }

  /// P(m > t) = p (m0/t)^alpha, P(m < -t) = (1-p) (m0/t)^alpha for t >= m0.
  static MarkLaw two_sided_pareto(double alpha, double m0, double p_right,
                                  const QuadOptions& psi_opt = {1e-8, 1e-12}) {
    require(alpha > 1 && alpha < 2, "two-sided Pareto index must lie in (1, 2)");
    require(m0 > 0, "two-sided Pareto threshold must be positive");
    require(p_right >= 0 && p_right <= 1, "two-sided Pareto right weight must lie in [0, 1]");
    MarkLaw m(MarkFamily::two_sided_pareto);
    m.p0_ = alpha;
    m.p1_ = m0;
    m.p2_ = p_right;
    m.psi_opt_ = psi_opt;
    m.osc_ = one_minus_cos_integral(alpha, psi_opt.tightened(0.1)).value;
    return m;
  }

  static MarkLaw dirac(double value) {
    require(value != 0 && std::isfinite(value), "dirac mark value must be finite and nonzero");
    MarkLaw m(MarkFamily::dirac);
    m.p0_ = value;
    return m;
  }

  /// Law of c*m for c > 0.
  MarkLaw scaled(double c) const {
    require(c > 0 && std::isfinite(c), "mark scaling factor must be positive");
    MarkLaw m = *this;
    m.mult_ *= c;
    return m;
  }

  MarkFamily family() const { return family_; }
  double multiplier() const { return mult_; }
  const QuadOptions& psi_options() const { return psi_opt_; }
  void set_psi_options(const QuadOptions& o) { psi_opt_ = o; }

  std::string description() const {
    std::string s = to_string(family_);
    if (mult_ != 1.0) s += " x" + std::to_string(mult_);
    return s;
  }

  /// Stable attractor (alpha, sigma, b) of the law.
  StableParams attractor() const {
    StableParams a;
    switch (family_) {
      case MarkFamily::rademacher: a = {2.0, 1.0 / std::sqrt(2.0), 0.0}; break;
      case MarkFamily::gaussian: a = {2.0, p0_ / std::sqrt(2.0), 0.0}; break;
      case MarkFamily::exact_stable: a = stable_; break;
      case MarkFamily::two_sided_pareto:
        a = {p0_, p1_ * std::pow(p0_ * osc_, 1.0 / p0_), 2 * p2_ - 1};
        break;
      case MarkFamily::dirac: a = {2.0, std::abs(p0_) / std::sqrt(2.0), 0.0}; break;
    }
    a.sigma *= mult_;
    return a;
  }

  double alpha() const { return attractor().alpha; }

  /// sigma^alpha of the attractor; exact for the Gaussian-domain families.
  double sigma_alpha() const {
    const StableParams a = attractor();
    double base;
    switch (family_) {
      case MarkFamily::rademacher: base = 0.5; break;
      case MarkFamily::gaussian: base = 0.5 * p0_ * p0_; break;
      case MarkFamily::dirac: base = 0.5 * p0_ * p0_; break;
      case MarkFamily::two_sided_pareto: base = p0_ * std::pow(p1_, p0_) * osc_; break;
      default: return std::pow(a.sigma, a.alpha);
    }
    return base * std::pow(mult_, a.alpha);
  }

  double mean() const {
    switch (family_) {
      case MarkFamily::two_sided_pareto:
        return mult_ * (2 * p2_ - 1) * p0_ * p1_ / (p0_ - 1);
      case MarkFamily::dirac: return mult_ * p0_;
      default: return 0.0;
    }
  }

  double abs_mean() const { return abs_moment(1.0); }

  /// E|m|^g, for 0 < g < alpha (any g > 0 for light-tailed laws).
  double abs_moment(double g) const {
    const double c = std::pow(mult_, g);
    switch (family_) {
      case MarkFamily::rademacher: return c;
      case MarkFamily::gaussian:
        return c * std::pow(p0_, g) * std::pow(2.0, g / 2) * std::tgamma((g + 1) / 2) / std::sqrt(kPi);
      case MarkFamily::exact_stable: return c * stable_moment(g).first;
      case MarkFamily::two_sided_pareto:
        require(g < p0_, "Pareto mark moment of order >= alpha diverges");
        return c * p0_ * std::pow(p1_, g) / (p0_ - g);
      case MarkFamily::dirac: return c * std::pow(std::abs(p0_), g);
    }
    return 0.0;
  }

  /// E[sign(m) |m|^g].
  double signed_moment(double g) const {
    const double c = std::pow(mult_, g);
    switch (family_) {
      case MarkFamily::exact_stable: return c * stable_moment(g).second;
      case MarkFamily::two_sided_pareto: return (2 * p2_ - 1) * abs_moment(g);
      case MarkFamily::dirac: return sign_of(p0_) * abs_moment(g);
      default: return 0.0;
    }
  }

  /// psi_G(u) = E psi(u m).
  cplx psi_G(double u) const {
    u *= mult_;
    if (u == 0) return 0.0;
    switch (family_) {
      case MarkFamily::rademacher: {
        const double s = std::sin(0.5 * u);
        return -2.0 * s * s;
      }
      case MarkFamily::gaussian: return std::expm1(-0.5 * p0_ * p0_ * u * u);
      case MarkFamily::exact_stable: {
        const double a = stable_.alpha;
        const double mag = std::pow(stable_.sigma * std::abs(u), a);
        return expm1c(cplx(-mag, mag * sign_of(u) * stable_.skew_tan()));
      }
      case MarkFamily::two_sided_pareto: {
        const cplx plus = pareto_positive_part(std::abs(u));
        cplx v = p2_ * plus + (1 - p2_) * std::conj(plus);
        return u > 0 ? v : std::conj(v);
      }
      case MarkFamily::dirac: return psi(p0_ * u);
    }
    return 0.0;
  }

  /// Small-theta limit of psi_G(theta)/|theta|^alpha for the given sign of theta.
  cplx small_theta_coefficient(int theta_sign) const {
    const StableParams a = attractor();
    const double sa = sigma_alpha();
    if (a.alpha == 2.0) return -sa;
    return -sa * cplx(1.0, -(theta_sign >= 0 ? 1.0 : -1.0) * a.skew_tan());
  }

  double sample(RandomStream& rng) const {
    double m = 0;
    switch (family_) {
      case MarkFamily::rademacher: m = rng.uniform() < 0.5 ? -1.0 : 1.0; break;
      case MarkFamily::gaussian: m = p0_ * rng.normal(); break;
      case MarkFamily::exact_stable: m = sample_stable(stable_, rng); break;
      case MarkFamily::two_sided_pareto: {
        const double mag = p1_ * std::pow(rng.uniform_open(), -1.0 / p0_);
        m = rng.uniform() < p2_ ? mag : -mag;
        break;
      }
      case MarkFamily::dirac: m = p0_; break;
    }
    return mult_ * m;
  }

  /// Family parameters as stored (scale / alpha / m0 / p / value); for reporting.
  std::array<double, 3> raw_parameters() const { return {p0_, p1_, p2_}; }
  const StableParams& stable_parameters() const { return stable_; }

 private:
  explicit MarkLaw(MarkFamily f) : family_(f) {}

  // (E|X|^g, E sign(X)|X|^g) for X ~ S_alpha(sigma, b, 0), 0 < g < alpha.
  std::pair<double, double> stable_moment(double g) const {
    const double a = stable_.alpha;
    require(g < a || a == 2.0, "stable mark moment of order >= alpha diverges");
    const double t = stable_.skew_tan();
    const double R = std::pow(1 + t * t, g / (2 * a));
    const double phi0 = g / a * std::atan(t);
    const double osc = kPi / (2 * std::tgamma(1 + g) * std::sin(kPi * g / 2));
    const double common = std::tgamma(1 - g / a) * std::pow(stable_.sigma, g) * R / (g * osc);
    const double abs_m = common * std::cos(phi0);
    // at g = 1 the signed moment is the mean, which is zero
    const double signed_m = (g == 1.0 || t == 0.0) ? 0.0 : common * std::sin(phi0) / std::tan(kPi * g / 2);
    return {abs_m, signed_m};
  }

  // alpha A^alpha K(A), A = m0 v, K(A) = int_A^inf psi(w) w^{-alpha-1} dw.
  cplx pareto_positive_part(double v) const {
    const double a = p0_, A = p1_ * v;
    cplx K;
    if (A <= 2.0) {
      const cplx K0 = -osc_ * cplx(1.0, -std::tan(kPi * a / 2));
      cplx series = 0, ik = -1.0;  // i^2
      double fact = 2.0, pw = A * A;
      for (int k = 2; k < 60; ++k) {
        const cplx term = ik * (pw * std::pow(A, -a) / (fact * (k - a)));
        series += term;
        if (std::abs(term) < 1e-18 * std::abs(series)) break;
        ik *= cplx(0, 1);
        pw *= A;
        fact *= k + 1;
      }
      K = K0 - series;
    } else {
      auto F = oscillatory_power_tail(a + 1, A, psi_opt_);
      if (!F.converged && psi_opt_.throw_on_failure)
        throw QuadratureError("psi_G quadrature did not converge", F.value.real(), F.error_estimate);
      K = F.value - std::pow(A, -a) / a - cplx(0, 1) * std::pow(A, 1 - a) / (a - 1);
    }
    return a * std::pow(A, a) * K;
  }

  MarkFamily family_;
  double p0_ = 0, p1_ = 0, p2_ = 0;
  double osc_ = 0;  // one-minus-cos integral at the Pareto index
  double mult_ = 1.0;
  StableParams stable_{};
  QuadOptions psi_opt_{1e-8, 1e-12};
};

/// Empirical sup of |psi_G(theta)| / |theta|^alpha over a log grid in [1e-3, 1e3].
inline double psi_power_bound_constant(const MarkLaw& marks) {
  const double a = marks.alpha();
  double k = 0;
  for (int i = 0; i <= 120; ++i) {
    const double th = std::pow(10.0, -3.0 + 6.0 * i / 120.0);
    k = std::max({k, std::abs(marks.psi_G(th)) / std::pow(th, a),
                  std::abs(marks.psi_G(-th)) / std::pow(th, a)});
  }
  return k;
}

}  // namespace coxballs
