#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "laws.hpp"
#include "measures.hpp"
#include "pointprocess.hpp"
#include "quadrature.hpp"

namespace coxballs {

struct CFValue {
  cplx value = 1.0;
  double error_estimate = 0;
};

struct CFOptions {
  QuadOptions r_opt{1e-9, 1e-15, 2000, false};  // radius integrals
  QuadOptions z_opt{1e-8, 1e-14, 2000, false};  // kernel offset integrals (d = 1)
  QuadOptions y_opt{1e-7, 1e-12, 4000, false};  // outer center integral
  double grid_fraction = 1.0 / 8;              // d = 2 grid spacing over the kernel bandwidth
  BallIntegralOptions ball;                    // global kinds
  std::vector<double> extra_cuts;              // known kinks of the cluster density (d = 1)
};

/// sigma_gamma and b_gamma of the gamma-stable small-ball limits.
struct GammaConstants {
  double gamma = 0;
  double sigma_gamma = 0;
  double b_gamma = 0;
  double I = 0;         // int_0^inf (1 - cos r) r^{-1-gamma} dr
  double abs_moment = 0;
  double signed_moment = 0;
  double error_estimate = 0;

  /// Exponent density -sigma_gamma |c|^gamma (1 + i sign(c) b_gamma tan(pi gamma / 2)).
  cplx exponent(double c) const {
    if (c == 0) return 0.0;
    return -sigma_gamma * std::pow(std::abs(c), gamma) *
           cplx(1.0, sign_of(c) * b_gamma * std::tan(kPi * gamma / 2));
  }
};

inline GammaConstants gamma_constants(const MarkLaw& marks, double beta, int d, const QuadOptions& opt = {1e-10, 1e-14}) {
  check_dimension(d);
  GammaConstants g;
  g.gamma = beta / d;
  const double a = marks.alpha();
  if (!(g.gamma > 1 && g.gamma < a))
    throw ValidationError("gamma constants need 1 < gamma = beta/d < alpha (gamma = " + std::to_string(g.gamma) + ")");
  auto I = one_minus_cos_integral(g.gamma, opt);
  g.I = I.value;
  g.abs_moment = marks.abs_moment(g.gamma);
  g.signed_moment = marks.signed_moment(g.gamma);
  // without the radius-law factor C_beta; see the overload below
  g.sigma_gamma = std::pow(unit_ball_volume(d), g.gamma) / d * g.I * g.abs_moment;
  g.b_gamma = g.abs_moment > 0 ? -g.signed_moment / g.abs_moment : 0.0;
  g.error_estimate = I.error_estimate / std::max(I.value, 1e-300) * g.sigma_gamma;
  return g;
}

/// Same constants including the radius-law factor C_beta.
inline GammaConstants gamma_constants(const MarkLaw& marks, const RadiusLaw& radius, int d,
                                      const QuadOptions& opt = {1e-10, 1e-14}) {
  auto g = gamma_constants(marks, radius.beta, d, opt);
  g.sigma_gamma *= radius.C_beta();
  g.error_estimate *= radius.C_beta();
  return g;
}

/// int_0^inf psi_G(sign u) u^{-gamma-1} du by direct quadrature (cross-check of the
/// moment route). The tail beyond U0 keeps the exact -1 - i u mbar part and bounds the rest.
inline QuadResult<cplx> psi_G_mellin(const MarkLaw& marks, double gamma, int sign, double U0 = 2000.0) {
  const double a = marks.alpha();
  require(gamma > 1 && gamma < a, "Mellin transform of psi_G needs 1 < gamma < alpha");
  const double s = sign >= 0 ? 1.0 : -1.0;
  auto f = [&](double u) { return marks.psi_G(s * u) * std::pow(u, -gamma - 1); };
  QuadOptions o{1e-10, 1e-14, 20000, false};
  auto head = integrate_left_singular<cplx>(f, 0.0, 1.0, a - gamma - 1, o);
  std::vector<double> br;
  for (double x = 1 + kPi; x < U0; x += kPi) br.push_back(x);
  auto mid = integrate<cplx>(f, 1.0, U0, o, br);
  const double mbar = marks.mean();
  const cplx tail = -std::pow(U0, -gamma) / gamma - cplx(0, s * mbar) * std::pow(U0, 1 - gamma) / (gamma - 1);
  QuadResult<cplx> out;
  out.value = head.value + mid.value + tail;
  out.error_estimate = head.error_estimate + mid.error_estimate + std::pow(U0, -gamma) / gamma;
  out.converged = head.converged && mid.converged;
  return out;
}

/// Marginal S_alpha parameters of the global-stable limit at this measure.
inline StableParams stable_limit_params(const TestMeasure& mu, const MarkLaw& marks, const RadiusLaw& radius,
                                        const Regime& regime, const BallIntegralOptions& opt = {}) {
  if (regime.kind != RegimeKind::global_stable)
    throw ValidationError("stable limit parameters are defined for the global-stable regime only");
  const StableParams at = marks.attractor();
  const auto AB = signed_alpha_integrals(mu, at.alpha, radius, opt);
  StableParams p;
  p.alpha = at.alpha;
  p.sigma = std::pow(marks.sigma_alpha() * AB.A, 1.0 / at.alpha);
  p.skew = AB.A > 0 ? at.skew * AB.B / AB.A : 0.0;
  return p;
}

namespace detail {

// int_{r_min}^{r_max} H(mu(B(x, r))) C r^{-beta-1} dr, H(0) = 0, |H(m)| ~ |m|^near_exp at 0.
template <class H>
QuadResult<cplx> radial_density(const TestMeasure& mu, const Point& x, H&& h, double C, double beta, double r_min,
                                double near_exp, const QuadOptions& opt, double r_max = INFINITY) {
  QuadResult<cplx> out;
  out.value = 0.0;
  const double lo = std::max(r_min, mu.support_distance(x));
  const double cover = mu.cover_radius(x);
  const double hi = std::min(cover, r_max);
  auto g = [&](double r) -> cplx { return h(mu.ball_mass(x, r)) * (C * std::pow(r, -beta - 1)); };
  if (hi > lo) {
    std::vector<double> br;
    for (double b : mu.radial_breakpoints(x))
      if (b > lo && b < hi) br.push_back(b);
    double start = lo;
    if (lo == 0) {
      // first smooth piece carries the r^{near_exp d - beta - 1} singularity
      const double r1 = br.empty() ? hi : br.front();
      auto s = integrate_left_singular<cplx>(g, 0.0, r1, near_exp * mu.dimension() - beta - 1, opt);
      out.value += s.value;
      out.error_estimate += s.error_estimate;
      out.evaluations += s.evaluations;
      out.converged = out.converged && s.converged;
      start = r1;
      if (!br.empty()) br.erase(br.begin());
    }
    if (hi > start) {
      auto s = integrate<cplx>(g, start, hi, opt, br);
      out.value += s.value;
      out.error_estimate += s.error_estimate;
      out.evaluations += s.evaluations;
      out.converged = out.converged && s.converged;
    }
  }
  const double from = std::max(cover, r_min);
  if (r_max > from) {
    const cplx hm = h(mu.total_mass());
    const double upper = std::isfinite(r_max) ? std::pow(r_max, -beta) : 0.0;
    out.value += hm * (C * (std::pow(from, -beta) - upper) / beta);
  }
  return out;
}

// Integration region for the kernel offset.
inline double kernel_support_radius(const Kernel& k) {
  return k.family == KernelFamily::gaussian ? 9.0 * k.bandwidth : k.bandwidth;
}

using DensityFn = std::function<cplx(const Point&)>;

// Piecewise Chebyshev interpolant on adaptively bisected panels. A panel is
// accepted once its interpolation error, weighted by length / `scale_len`, is below tol.
class PanelInterpolant {
 public:
  static constexpr int kNodes = 9;

  template <class F>
  PanelInterpolant(F&& f, std::vector<double> cuts, double tol, double scale_len, double max_len,
                   std::size_t max_panels = 20000) {
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<std::pair<double, double>> todo;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double lo = cuts[i], hi = cuts[i + 1];
      const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_len)));
      for (int j = 0; j < pieces; ++j)
        todo.push_back({lo + (hi - lo) * j / pieces, j + 1 == pieces ? hi : lo + (hi - lo) * (j + 1) / pieces});
    }
    // depth-first, left to right, so panels come out sorted
    std::vector<std::pair<double, double>> stack(todo.rbegin(), todo.rend());
    double scale = 0;
    while (!stack.empty()) {
      auto [lo, hi] = stack.back();
      stack.pop_back();
      Panel p{lo, hi, {}};
      for (int k = 0; k < kNodes; ++k) {
        p.v[k] = f(p.at(node(k)));
        scale = std::max(scale, std::abs(p.v[k]));
      }
      double err = 0;
      for (double t : {-0.61, 0.37}) err = std::max(err, std::abs(f(p.at(t)) - p.eval(t)));
      const bool small = (hi - lo) <= 1e-12 * std::max(1.0, std::abs(lo));
      if (small || err * (hi - lo) / scale_len <= tol * std::max(scale, 1e-300) ||
          panels_.size() + stack.size() >= max_panels) {
        panels_.push_back(p);
        error_ += err * (hi - lo);
      } else {
        const double mid = 0.5 * (lo + hi);
        stack.push_back({mid, hi});
        stack.push_back({lo, mid});
      }
    }
  }

  cplx operator()(double x) const {
    if (panels_.empty() || x < panels_.front().lo || x > panels_.back().hi) return 0.0;
    auto it = std::upper_bound(panels_.begin(), panels_.end(), x, [](double v, const Panel& p) { return v < p.lo; });
    const Panel& p = *std::prev(it == panels_.begin() ? std::next(it) : it);
    return p.eval((2 * x - p.lo - p.hi) / (p.hi - p.lo));
  }
  double lo() const { return panels_.front().lo; }
  double hi() const { return panels_.back().hi; }
  std::size_t panels() const { return panels_.size(); }
  /// Sum over panels of the probe error times the panel length.
  double integrated_error() const { return error_; }

 private:
  static double node(int k) { return std::cos(kPi * k / (kNodes - 1)); }
  struct Panel {
    double lo, hi;
    std::array<cplx, kNodes> v;
    double at(double t) const { return 0.5 * (lo + hi) + 0.5 * (hi - lo) * t; }
    cplx eval(double t) const {
      cplx num = 0;
      double den = 0;
      for (int k = 0; k < kNodes; ++k) {
        const double d = t - node(k);
        if (d == 0) return v[k];
        double w = (k % 2 ? -1.0 : 1.0) / d;
        if (k == 0 || k == kNodes - 1) w *= 0.5;
        num += w * v[k];
        den += w;
      }
      return num / den;
    }
  };
  std::vector<Panel> panels_;
  double error_ = 0;
};

// Small product rule for the kernel average of a smooth function: 8-point
// Gauss-Hermite (Gaussian) or Gauss-Legendre on [-h, h] (uniform), d = 1.
inline std::vector<std::pair<double, double>> kernel_rule_1d(const Kernel& k) {
  static const double gh_x[4] = {0.53907981135137506, 1.6365190424351079, 2.8024858612875416, 4.1445471861258945};
  static const double gh_w[4] = {0.37301225767907736, 0.11723990766175905, 0.0096352201207882578,
                                 0.00011261453837536765};
  static const double gl_x[4] = {0.18343464249564978, 0.52553240991632899, 0.79666647741362673, 0.96028985649753618};
  static const double gl_w[4] = {0.18134189168918088, 0.15685332293894352, 0.11119051722668717, 0.050614268145188344};
  std::vector<std::pair<double, double>> rule;
  const bool g = k.family == KernelFamily::gaussian;
  for (int i = 0; i < 4; ++i)
    for (double s : {-1.0, 1.0}) rule.push_back({s * k.bandwidth * (g ? gh_x[i] : gl_x[i]), g ? gh_w[i] : gl_w[i]});
  return rule;
}

// exp(-kappa int (1 - exp((k * ell)(y))) dy) in d = 1. ell is interpolated on
// panels over the central region and evaluated exactly on the far half-lines.
// `tail_decay` > 1 is the power decay of ell far from the support (0: ell vanishes outside it).
inline CFValue cox_outer_1d(const TestMeasure& mu, const Kernel& k, const DensityFn& ell, double kappa,
                            double tail_decay, const CFOptions& opt) {
  const double h = k.bandwidth;
  const double Rz = kernel_support_radius(k);
  const Box S = mu.support_box();
  const double width = S.hi[0] - S.lo[0];
  std::vector<double> edges;
  for (const auto& p : mu.pieces()) {
    edges.push_back(p.box.lo[0]);
    edges.push_back(p.box.hi[0]);
  }
  std::sort(edges.begin(), edges.end());
  const double L = tail_decay > 0 ? std::max(4 * width, 10 * h) + Rz : Rz;
  const double A = S.lo[0] - L, B = S.hi[0] + L;
  std::vector<double> cuts = {A - Rz, B + Rz};
  for (double e : edges) cuts.push_back(e);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) cuts.push_back(0.5 * (edges[i] + edges[i + 1]));
  for (double c : opt.extra_cuts) cuts.push_back(c);
  std::erase_if(cuts, [&](double c) { return c < A - Rz || c > B + Rz; });
  const double tol = opt.z_opt.rel_tol;
  PanelInterpolant tab([&](double x) { return ell(Point{x, 0, 0}); }, cuts, tol, h, h / 2);

  double inner_err = 0;
  auto Q = [&](double y) -> cplx {
    std::vector<double> br;
    for (double e : edges) br.push_back(e - y);
    if (k.family == KernelFamily::uniform_ball) {
      br.push_back(-h);
      br.push_back(h);
    }
    auto r = integrate<cplx>([&](double z) { return k.density(Point{z, 0, 0}) * tab(y + z); }, -Rz, Rz, opt.z_opt,
                             br);
    inner_err = std::max(inner_err, r.error_estimate);
    return r.value;
  };
  auto integrand = [&](double y) -> cplx { return -expm1c(Q(y)); };
  std::vector<double> br;
  for (double e : edges)
    for (double s : {-Rz, -h, 0.0, h, Rz}) br.push_back(e + s);
  auto mid = integrate<cplx>(integrand, A, B, opt.y_opt, br);
  cplx total = mid.value;
  double err = mid.error_estimate + (B - A) * inner_err;
  if (tail_decay > 0) {
    const auto rule = kernel_rule_1d(k);
    auto far = [&](double y) -> cplx {
      cplx q = 0;
      for (const auto& [z, w] : rule) q += w * ell(Point{y + z, 0, 0});
      return -expm1c(q);
    };
    const double c = std::max(h, width);
    auto right = integrate_half_line<cplx>(far, B, tail_decay, c, opt.y_opt);
    auto left = integrate_left_half_line<cplx>(far, A, tail_decay, c, opt.y_opt);
    total += right.value + left.value;
    err += right.error_estimate + left.error_estimate;
  }
  // |delta Q| integrates to at most the integrated interpolation error
  err += tab.integrated_error();
  CFValue out;
  out.value = std::exp(-kappa * total);
  out.error_estimate = std::abs(out.value) * kappa * err;
  return out;
}

// Same functional in d = 2: ell on a grid convolved with the kernel, trapezoid
// sum over the inner box, and a polar far field with a small product rule for
// the kernel average.
inline CFValue cox_outer_2d(const TestMeasure& mu, const Kernel& k, const DensityFn& ell, double kappa,
                            double tail_decay, const CFOptions& opt) {
  const double h = k.bandwidth;
  const auto conv = k.convolution();
  const Box S = mu.support_box();
  const double W = std::max({2 * S.half_diagonal(), 4 * h, conv.reach + h});
  const Box Yb = S.inflated(W);
  double spacing = h * opt.grid_fraction;
  for (int i = 0; i < 2; ++i) spacing = std::min(spacing, (Yb.hi[i] - Yb.lo[i]) / 64.0);
  const Box Gb = Yb.inflated(conv.reach);
  Grid<cplx> g = Grid<cplx>::covering(Gb, spacing);
  if (g.size() > (std::size_t{1} << 22)) throw CapabilityError("d = 2 CF grid too large for this kernel/measure");
  // cells cut by a piece boundary get 8 x 8 sub-sample averages; ell may jump there
  auto cut = [&](const Point& c) {
    const double hs = 0.5 * spacing;
    for (const auto& p : mu.pieces()) {
      if (p.is_ball) {
        if (std::abs(distance(c, p.center, 2) - p.radius) <= hs * std::sqrt(2.0)) return true;
        continue;
      }
      for (int a = 0; a < 2; ++a) {
        const int o = 1 - a;
        if (c[o] + hs < p.box.lo[o] || c[o] - hs > p.box.hi[o]) continue;
        for (double e : {p.box.lo[a], p.box.hi[a]})
          if (std::abs(c[a] - e) <= hs) return true;
      }
    }
    return false;
  };
  for (std::size_t j = 0; j < g.n[1]; ++j)
    for (std::size_t i = 0; i < g.n[0]; ++i) {
      const Point c = g.node(i, j);
      if (!cut(c)) {
        g.values[g.index(i, j)] = ell(c);
        continue;
      }
      cplx acc = 0;
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
          acc += ell({c[0] + ((a + 0.5) / 8 - 0.5) * spacing, c[1] + ((b + 0.5) / 8 - 0.5) * spacing, 0});
      g.values[g.index(i, j)] = acc / 64.0;
    }
  const Grid<cplx> Q = convolve_grid(g, conv);
  // nodes inside Yb
  std::size_t lo[2], hi[2];
  for (int a = 0; a < 2; ++a) {
    lo[a] = static_cast<std::size_t>(std::ceil((Yb.lo[a] - g.origin[a]) / spacing - 1e-9));
    hi[a] = static_cast<std::size_t>(std::floor((Yb.hi[a] - g.origin[a]) / spacing + 1e-9));
  }
  std::vector<cplx> rows;
  for (std::size_t j = lo[1]; j <= hi[1]; ++j) {
    std::vector<cplx> row;
    for (std::size_t i = lo[0]; i <= hi[0]; ++i) {
      const double w = ((i == lo[0] || i == hi[0]) ? 0.5 : 1.0) * ((j == lo[1] || j == hi[1]) ? 0.5 : 1.0);
      row.push_back(-expm1c(Q.values[Q.index(i, j)]) * w);
    }
    rows.push_back(pairwise_sum(row));
  }
  cplx total = pairwise_sum(rows) * spacing * spacing;
  // trapezoid error from the same values on every other node
  double err = 0;
  if ((hi[0] - lo[0]) % 2 == 0 && (hi[1] - lo[1]) % 2 == 0) {
    cplx coarse = 0;
    for (std::size_t j = lo[1]; j <= hi[1]; j += 2)
      for (std::size_t i = lo[0]; i <= hi[0]; i += 2) {
        const double w = ((i == lo[0] || i == hi[0]) ? 0.5 : 1.0) * ((j == lo[1] || j == hi[1]) ? 0.5 : 1.0);
        coarse += -expm1c(Q.values[Q.index(i, j)]) * w;
      }
    err = std::abs(coarse * (4 * spacing * spacing) - total) / 3;
  } else {
    err = 1e-3 * std::abs(total);
  }
  // integration box actually covered by the trapezoid sum
  Box inner{2,
            {g.origin[0] + lo[0] * spacing, g.origin[1] + lo[1] * spacing, 0},
            {g.origin[0] + hi[0] * spacing, g.origin[1] + hi[1] * spacing, 0}};
  if (tail_decay > 0) {
    // kernel average far from the support: 4 x 4 Gauss-Hermite, or a polar rule on the ball
    std::vector<std::pair<Point, double>> rule;
    if (k.family == KernelFamily::gaussian) {
      const double xs[4] = {-2.3344142183389773, -0.7419637843027259, 0.7419637843027259, 2.3344142183389773};
      const double ws[4] = {0.04587585476806849, 0.4541241452319315, 0.4541241452319315, 0.04587585476806849};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) rule.push_back({{h * xs[a], h * xs[b], 0}, ws[a] * ws[b]});
    } else {
      // uniform on the disk: r^2 uniform, 3-point Gauss-Legendre in r^2 times 8 angles
      const double ss[3] = {0.1127016653792583, 0.5, 0.8872983346207417};
      const double ws[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
      for (int a = 0; a < 3; ++a)
        for (int t = 0; t < 8; ++t) {
          const double ang = 2 * kPi * (t + 0.5) / 8, r = h * std::sqrt(ss[a]);
          rule.push_back({{r * std::cos(ang), r * std::sin(ang), 0}, ws[a] / 8});
        }
    }
    auto Qfar = [&](const Point& y) {
      cplx s = 0;
      for (const auto& [z, w] : rule) s += w * ell(add(y, z));
      return s;
    };
    const Point c = inner.center();
    const double hx = 0.5 * (inner.hi[0] - inner.lo[0]), hy = 0.5 * (inner.hi[1] - inner.lo[1]);
    auto exit_distance = [&](double ang) {
      const double cx = std::abs(std::cos(ang)), sy = std::abs(std::sin(ang));
      return std::min(cx > 0 ? hx / cx : INFINITY, sy > 0 ? hy / sy : INFINITY);
    };
    const double corners[5] = {std::atan2(hy, hx), kPi - std::atan2(hy, hx), kPi + std::atan2(hy, hx),
                               2 * kPi - std::atan2(hy, hx), 2 * kPi + std::atan2(hy, hx)};
    auto radial = [&](double ang) -> cplx {
      const double s0 = exit_distance(ang);
      const Point dir{std::cos(ang), std::sin(ang), 0};
      auto r = integrate_half_line<cplx>(
          [&](double s) { return -expm1c(Qfar(add(c, scale(dir, s))))* s; }, s0, tail_decay - 1.0, s0, opt.y_opt);
      err += r.error_estimate;
      return r.value;
    };
    for (int q = 0; q < 4; ++q) {
      auto r = integrate<cplx>(radial, corners[q], corners[q + 1], opt.y_opt);
      total += r.value;
      err += r.error_estimate;
    }
  }
  CFValue out;
  out.value = std::exp(-kappa * total);
  out.error_estimate = std::abs(out.value) * kappa * err;
  return out;
}

inline CFValue cox_outer(const TestMeasure& mu, const Kernel& k, const DensityFn& ell, double kappa, double tail_decay,
                         const CFOptions& opt) {
  switch (mu.dimension()) {
    case 1: return cox_outer_1d(mu, k, ell, kappa, tail_decay, opt);
    case 2: return cox_outer_2d(mu, k, ell, kappa, tail_decay, opt);
    default: throw CapabilityError("cluster-level characteristic functions are implemented for d <= 2");
  }
}

}  // namespace detail

/// Characteristic function of the normalized fluctuation at scale rho:
/// exp(-kappa int (1 - exp(lambda int q(x) k(x - y) dx)) dy) with
/// q(x) = int psi_G(theta mu(B(x, r)) / n(rho)) f_rho(r) dr.
inline CFValue exact_cf(const ModelSpec& m, const TestMeasure& mu, double rho, double theta, const CFOptions& opt = {},
                        double r_max = INFINITY) {
  require(rho > 0 && rho < 1, "scale rho must lie in (0, 1)");
  require(mu.dimension() == m.d, "measure dimension must match the model");
  if (theta == 0 || mu.is_zero()) return {};
  const Regime reg = classify_regime(m);
  const double n = reg.n(rho);
  const double lambda = m.scaling.lambda(rho), kappa = m.scaling.kappa(rho);
  const double beta = m.radius.beta;
  const double C = beta * std::pow(rho * m.radius.r0, beta);
  const double rmin = rho * m.radius.r0;
  auto H = [&](double v) { return m.marks.psi_G(theta * v / n); };
  detail::DensityFn ell = [&](const Point& x) {
    return lambda * detail::radial_density(mu, x, H, C, beta, rmin, 1.0, opt.r_opt, r_max).value;
  };
  CFOptions o = opt;
  if (m.d == 1)
    for (const auto& p : mu.pieces())
      for (double e : {p.box.lo[0], p.box.hi[0]})
        for (double r : {rmin, r_max})
          if (std::isfinite(r)) {
            o.extra_cuts.push_back(e - r);
            o.extra_cuts.push_back(e + r);
          }
  return detail::cox_outer(mu, m.kernel, ell, kappa, beta, o);
}

/// Characteristic function of the limit of the normalized fluctuation.
inline CFValue limit_cf(const Regime& regime, const ModelSpec& m, const TestMeasure& mu, double theta,
                        const CFOptions& opt = {}) {
  require(mu.dimension() == m.d, "measure dimension must match the model");
  const Regime actual = classify_regime(m);
  if (actual.kind != regime.kind) throw ValidationError("regime does not match the model's scaling exponents");
  if (theta == 0 || mu.is_zero()) return {};
  const double beta = m.radius.beta, Cb = m.radius.C_beta();
  const int d = m.d;
  const double alpha = m.marks.alpha();
  const double eps = theta > 0 ? 1.0 : -1.0;
  const cplx cpos = m.marks.small_theta_coefficient(+1), cneg = m.marks.small_theta_coefficient(-1);
  // exponent density of the stable kinds at mass v
  auto stable_H = [&](double v) -> cplx {
    if (v == 0) return 0.0;
    return (theta * v > 0 ? cpos : cneg) * std::pow(std::abs(theta * v), alpha);
  };
  auto poisson_H = [&](double v) { return m.marks.psi_G(theta * v); };

  switch (regime.kind) {
    case RegimeKind::local_stable: {
      detail::DensityFn ell = [&](const Point& x) {
        return detail::radial_density(mu, x, stable_H, Cb, beta, 0.0, alpha, opt.r_opt).value;
      };
      return detail::cox_outer(mu, m.kernel, ell, 1.0, beta, opt);
    }
    case RegimeKind::local_intermediate: {
      const double a = regime.a;
      detail::DensityFn ell = [&](const Point& x) {
        return detail::radial_density(mu, x, poisson_H, a * Cb, beta, 0.0, alpha, opt.r_opt).value;
      };
      return detail::cox_outer(mu, m.kernel, ell, 1.0, beta, opt);
    }
    case RegimeKind::local_smallballs: {
      const auto gc = gamma_constants(m.marks, m.radius, d);
      detail::DensityFn ell = [&](const Point& x) { return gc.exponent(theta * mu.density(x)); };
      return detail::cox_outer(mu, m.kernel, ell, 1.0, 0.0, opt);
    }
    case RegimeKind::global_stable: {
      const auto AB = signed_alpha_integrals(mu, alpha, m.radius, opt.ball);
      const double Ap = 0.5 * (AB.A + AB.B), Am = 0.5 * (AB.A - AB.B);
      const cplx e = std::pow(std::abs(theta), alpha) * (eps > 0 ? cpos * Ap + cneg * Am : cneg * Ap + cpos * Am);
      return {std::exp(e), std::abs(std::exp(e)) * std::abs(m.marks.sigma_alpha()) *
                               std::pow(std::abs(theta), alpha) * AB.error_estimate};
    }
    case RegimeKind::global_poisson: {
      auto r = radial_profile_integral<cplx>(mu, poisson_H, beta, alpha, opt.ball);
      const cplx e = regime.a * Cb * r.value;
      return {std::exp(e), std::abs(std::exp(e)) * regime.a * Cb * r.error_estimate};
    }
    case RegimeKind::global_gamma: {
      const auto gc = gamma_constants(m.marks, m.radius, d);
      // piecewise-constant density: sum over the cells cut out by the pieces
      cplx e = 0;
      if (d == 1) {
        std::vector<double> pts;
        for (const auto& p : mu.pieces()) {
          pts.push_back(p.box.lo[0]);
          pts.push_back(p.box.hi[0]);
        }
        std::sort(pts.begin(), pts.end());
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
          const double len = pts[i + 1] - pts[i];
          if (len <= 0) continue;
          e += gc.exponent(theta * mu.density({0.5 * (pts[i] + pts[i + 1]), 0, 0})) * len;
        }
      } else {
        auto r = integrate_box<cplx>([&](const Point& x) { return gc.exponent(theta * mu.density(x)); },
                                     mu.support_box(), opt.ball.inner,
                                     [&](int axis, const Point& fixed) { return mu.axis_breakpoints(axis, fixed, 0.0); },
                                     opt.ball.qmc_points);
        e = r.value;
      }
      return {std::exp(e), std::abs(std::exp(e)) * gc.error_estimate / std::max(gc.sigma_gamma, 1e-300) * std::abs(e)};
    }
  }
  return {};
}

}  // namespace coxballs
