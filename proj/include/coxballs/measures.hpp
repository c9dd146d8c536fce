#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "laws.hpp"
#include "quadrature.hpp"

namespace coxballs {

namespace geometry {

// integral of sqrt(r^2 - x^2) over [lo, hi], |lo|, |hi| <= r, without
// cancellation for large r
inline double chord_integral(double r, double lo, double hi) {
  const double sl = std::sqrt(std::max(0.0, (r - lo) * (r + lo)));
  const double sh = std::sqrt(std::max(0.0, (r - hi) * (r + hi)));
  const double dang = std::atan2(hi * sl - lo * sh, sh * sl + hi * lo);
  return 0.5 * (hi * sh - lo * sl) + 0.5 * r * r * dang;
}

/// Area of the disk of radius r centered at the origin intersected with the
/// rectangle [x0, x1] x [y0, y1].
inline double disk_rect_area(double r, double x0, double x1, double y0, double y1) {
  if (!(r > 0) || x1 <= x0 || y1 <= y0) return 0.0;
  const double lo = std::max(x0, -r), hi = std::min(x1, r);
  if (hi <= lo || y0 >= r || y1 <= -r) return 0.0;
  // fully inside?
  const double fx = std::max(std::abs(x0), std::abs(x1)), fy = std::max(std::abs(y0), std::abs(y1));
  if (fx * fx + fy * fy <= r * r) return (x1 - x0) * (y1 - y0);
  // chord length of column x is clamp(min(y1, s) - max(y0, -s), 0); split where s = |y0|, |y1|
  std::vector<double> pts{lo, hi};
  for (double y : {y0, y1})
    if (std::abs(y) < r) {
      const double c = std::sqrt((r - std::abs(y)) * (r + std::abs(y)));
      for (double x : {-c, c})
        if (x > lo && x < hi) pts.push_back(x);
    }
  std::sort(pts.begin(), pts.end());
  double area = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i], b = pts[i + 1];
    if (b <= a) continue;
    // two probes: a tangency at x = 0 can make one of them a tie
    const double m1 = a + 0.3 * (b - a), m2 = a + 0.7 * (b - a);
    const double s1 = std::sqrt(std::max(0.0, (r - m1) * (r + m1)));
    const double s2 = std::sqrt(std::max(0.0, (r - m2) * (r + m2)));
    const bool top_is_circle = s1 < y1 || s2 < y1, bottom_is_circle = -s1 > y0 || -s2 > y0;
    if (std::min(y1, s1) <= std::max(y0, -s1) && std::min(y1, s2) <= std::max(y0, -s2)) continue;
    const double S = chord_integral(r, a, b);
    double piece;
    if (top_is_circle && bottom_is_circle) piece = 2 * S;
    else if (top_is_circle) piece = S - y0 * (b - a);
    else if (bottom_is_circle) piece = y1 * (b - a) + S;
    else piece = (y1 - y0) * (b - a);
    area += piece;
  }
  return std::clamp(area, 0.0, (x1 - x0) * (y1 - y0));
}

/// Lens area of two disks with radii r1, r2 at center distance d.
inline double lens_area(double d, double r1, double r2) {
  if (d >= r1 + r2) return 0.0;
  if (d <= std::abs(r1 - r2)) {
    const double m = std::min(r1, r2);
    return kPi * m * m;
  }
  const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
  const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
  const double k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
  return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * std::sqrt(std::max(0.0, k));
}

/// Volume of the ball of radius r at the origin intersected with a box, by
/// integrating exact disk-rectangle slice areas along the third axis.
inline double ball_box_volume(double r, const Point& lo, const Point& hi) {
  const double z0 = std::max(lo[2], -r), z1 = std::min(hi[2], r);
  if (z1 <= z0) return 0.0;
  double far = 0;
  for (int i = 0; i < 3; ++i) far += std::pow(std::max(std::abs(lo[i]), std::abs(hi[i])), 2);
  if (far <= r * r) return (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
  // slice radius crosses edge lines and corners at these heights
  std::vector<double> ds{std::abs(lo[0]), std::abs(hi[0]), std::abs(lo[1]), std::abs(hi[1])};
  for (double x : {lo[0], hi[0]})
    for (double y : {lo[1], hi[1]}) ds.push_back(std::hypot(x, y));
  std::vector<double> br;
  for (double dd : ds)
    if (dd < r) {
      const double z = std::sqrt((r - dd) * (r + dd));
      br.push_back(z);
      br.push_back(-z);
    }
  auto slice = [&](double z) {
    const double s = std::sqrt(std::max(0.0, (r - z) * (r + z)));
    return disk_rect_area(s, lo[0], hi[0], lo[1], hi[1]);
  };
  const double vol = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
  QuadOptions o{1e-13, 1e-15 * vol, 2000, false};
  return std::clamp(integrate(slice, z0, z1, o, br).value, 0.0, vol);
}

}  // namespace geometry

enum class MeasureForm { interval, box, ball, sum };

inline std::string to_string(MeasureForm f) {
  switch (f) {
    case MeasureForm::interval: return "interval";
    case MeasureForm::box: return "box";
    case MeasureForm::ball: return "ball";
    case MeasureForm::sum: return "sum";
  }
  return "?";
}

/// Indicator piece: weight * 1_box or weight * 1_ball.
struct MeasurePiece {
  bool is_ball = false;
  Box box;
  Point center{0, 0, 0};
  double radius = 0;
  double weight = 1;
};

/// Finite signed measure with piecewise-constant density and closed-form ball masses.
class TestMeasure {
 public:
  static TestMeasure interval(double a, double b, double weight = 1.0) {
    require(b > a, "interval measure needs lower < upper");
    Box bx{1, {a, 0, 0}, {b, 0, 0}};
    return TestMeasure(1, MeasureForm::interval, {MeasurePiece{false, bx, {}, 0, weight}});
  }

  static TestMeasure box(int d, const Point& lo, const Point& hi, double weight = 1.0) {
    check_dimension(d);
    for (int i = 0; i < d; ++i) require(hi[i] > lo[i], "box measure needs lower < upper on every axis");
    Box bx{d, lo, hi};
    for (int i = d; i < kMaxDim; ++i) bx.lo[i] = bx.hi[i] = 0;
    return TestMeasure(d, d == 1 ? MeasureForm::interval : MeasureForm::box,
                       {MeasurePiece{false, bx, {}, 0, weight}});
  }

  static TestMeasure ball(int d, const Point& c, double radius, double weight = 1.0) {
    check_dimension(d);
    require(radius > 0, "ball measure needs a positive radius");
    if (d == 3) throw CapabilityError("ball-indicator measures are implemented for d <= 2 only");
    if (d == 1) return interval(c[0] - radius, c[0] + radius, weight);
    Box bx{d, {c[0] - radius, c[1] - radius, 0}, {c[0] + radius, c[1] + radius, 0}};
    return TestMeasure(d, MeasureForm::ball, {MeasurePiece{true, bx, c, radius, weight}});
  }

  /// Point masses fail the M_{alpha,beta} envelope (their profile is v_d r^d), so
  /// they are refused.
  [[noreturn]] static TestMeasure dirac(int, const Point&) {
    throw ValidationError(
        "Dirac measures are not admissible test measures: their alpha-profile equals v_d r^d, "
        "which violates the envelope exponent q > beta");
  }

  static TestMeasure zero(int d) {
    check_dimension(d);
    return TestMeasure(d, MeasureForm::sum, {});
  }

  /// Weighted sum sum_i c_i mu_i.
  static TestMeasure sum(const std::vector<std::pair<double, TestMeasure>>& terms) {
    require(!terms.empty(), "weighted-sum measure needs at least one term");
    const int d = terms.front().second.dim_;
    std::vector<MeasurePiece> pieces;
    for (const auto& [c, m] : terms) {
      require(m.dim_ == d, "weighted-sum terms must share the dimension");
      for (auto p : m.pieces_) {
        p.weight *= c;
        pieces.push_back(p);
      }
    }
    return TestMeasure(d, MeasureForm::sum, std::move(pieces));
  }

  TestMeasure scaled(double c) const {
    TestMeasure m = *this;
    for (auto& p : m.pieces_) p.weight *= c;
    return m;
  }

  int dimension() const { return dim_; }
  MeasureForm form() const { return form_; }
  const std::vector<MeasurePiece>& pieces() const { return pieces_; }
  bool is_zero() const {
    return std::all_of(pieces_.begin(), pieces_.end(), [](const MeasurePiece& p) { return p.weight == 0; });
  }

  Box support_box() const {
    Box b{dim_, {0, 0, 0}, {0, 0, 0}};
    bool first = true;
    for (const auto& p : pieces_) {
      if (p.weight == 0) continue;
      b = first ? p.box : b.merged(p.box);
      first = false;
    }
    return b;
  }

  double piece_volume(const MeasurePiece& p) const {
    return p.is_ball ? unit_ball_volume(dim_) * std::pow(p.radius, dim_) : p.box.volume();
  }

  /// mu(R^d).
  double total_mass() const {
    double s = 0;
    for (const auto& p : pieces_) s += p.weight * piece_volume(p);
    return s;
  }

  /// ||mu|| = int |phi|. Exact in d = 1 and for pairwise disjoint pieces;
  /// otherwise the upper bound sum |w_i| vol_i (see total_variation_exact).
  double total_variation() const {
    if (dim_ == 1) return exact_1d_norms().first;
    double s = 0;
    for (const auto& p : pieces_) s += std::abs(p.weight) * piece_volume(p);
    return s;
  }
  bool total_variation_exact() const { return dim_ == 1 || pieces_disjoint(); }

  /// ||phi||_inf; exact in d = 1 and for disjoint pieces, else an upper bound.
  double sup_density() const {
    if (dim_ == 1) return exact_1d_norms().second;
    if (pieces_disjoint()) {
      double m = 0;
      for (const auto& p : pieces_) m = std::max(m, std::abs(p.weight));
      return m;
    }
    double s = 0;
    for (const auto& p : pieces_) s += std::abs(p.weight);
    return s;
  }

  /// Density phi(x).
  double density(const Point& x) const {
    double s = 0;
    for (const auto& p : pieces_) {
      const bool in = p.is_ball ? distance(x, p.center, dim_) <= p.radius : p.box.contains(x);
      if (in) s += p.weight;
    }
    return s;
  }

  /// mu(B(x, r)).
  double ball_mass(const Point& x, double r) const {
    if (!(r > 0)) return 0.0;
    double s = 0;
    for (const auto& p : pieces_) s += p.weight * piece_ball_mass(p, x, r);
    return s;
  }

  /// Radii at which r -> mu(B(x, r)) may fail to be smooth.
  std::vector<double> radial_breakpoints(const Point& x) const {
    std::vector<double> out;
    for (const auto& p : pieces_) {
      if (p.is_ball) {
        const double dd = distance(x, p.center, dim_);
        out.push_back(std::abs(dd - p.radius));
        out.push_back(dd + p.radius);
        continue;
      }
      // distances to face planes, edge lines and corners
      Point e{0, 0, 0}, f{0, 0, 0};
      for (int i = 0; i < dim_; ++i) {
        e[i] = std::abs(x[i] - p.box.lo[i]);
        f[i] = std::abs(x[i] - p.box.hi[i]);
        out.push_back(e[i]);
        out.push_back(f[i]);
      }
      if (dim_ >= 2) {
        for (int i = 0; i < dim_; ++i)
          for (int j = i + 1; j < dim_; ++j)
            for (double a : {e[i], f[i]})
              for (double b : {e[j], f[j]}) out.push_back(std::hypot(a, b));
      }
      if (dim_ == 3)
        for (double a : {e[0], f[0]})
          for (double b : {e[1], f[1]})
            for (double c : {e[2], f[2]}) out.push_back(std::sqrt(a * a + b * b + c * c));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Smallest r with B(x, r) containing every piece (then the mass is total_mass()).
  double cover_radius(const Point& x) const {
    double m = 0;
    for (const auto& p : pieces_)
      m = std::max(m, p.is_ball ? distance(x, p.center, dim_) + p.radius : p.box.farthest_distance(x));
    return m;
  }

  /// Largest r with mu(B(x, r)) = 0 guaranteed.
  double support_distance(const Point& x) const {
    double m = INFINITY;
    for (const auto& p : pieces_)
      m = std::min(m, p.is_ball ? std::max(0.0, distance(x, p.center, dim_) - p.radius) : p.box.distance_to(x));
    return m;
  }

  /// For r below this, mu(B(x, r)) = phi(x) v_d r^d exactly.
  double density_radius(const Point& x) const {
    double m = INFINITY;
    for (const auto& p : pieces_) {
      if (p.is_ball) {
        m = std::min(m, std::abs(distance(x, p.center, dim_) - p.radius));
        continue;
      }
      if (p.box.contains(x)) {
        for (int i = 0; i < dim_; ++i)
          m = std::min({m, x[i] - p.box.lo[i], p.box.hi[i] - x[i]});
      } else {
        m = std::min(m, p.box.distance_to(x));
      }
    }
    return m;
  }

  /// Breakpoints of the x-integrand along `axis` at ball radius r, given the
  /// outer coordinates in `fixed`.
  std::vector<double> axis_breakpoints(int axis, const Point& fixed, double r) const {
    std::vector<double> out;
    for (const auto& p : pieces_) {
      if (p.is_ball) {
        const double c = p.center[axis];
        if (axis == 0) {
          for (double s : {p.radius + r, std::abs(p.radius - r), p.radius}) {
            out.push_back(c - s);
            out.push_back(c + s);
          }
        } else {
          const double dx = fixed[0] - p.center[0];
          for (double s : {p.radius + r, std::abs(p.radius - r), p.radius})
            if (std::abs(dx) < s) {
              const double h = std::sqrt((s - std::abs(dx)) * (s + std::abs(dx)));
              out.push_back(c - h);
              out.push_back(c + h);
            }
        }
        continue;
      }
      for (double e : {p.box.lo[axis], p.box.hi[axis]}) {
        out.push_back(e);
        out.push_back(e - r);
        out.push_back(e + r);
        // rounded corners of the inflated box seen from the fixed outer coordinates
        for (int o = 0; o < axis; ++o)
          for (double eo : {p.box.lo[o], p.box.hi[o]}) {
            const double dx = std::abs(fixed[o] - eo);
            if (dx < r) {
              const double h = std::sqrt((r - dx) * (r + dx));
              out.push_back(e - h);
              out.push_back(e + h);
            }
          }
      }
    }
    return out;
  }

  /// Radii where the profile r -> int h(mu(B(x, r))) dx may have kinks.
  std::vector<double> profile_breakpoints() const {
    std::vector<double> out;
    std::vector<double> coords[kMaxDim];
    for (const auto& p : pieces_)
      for (int i = 0; i < dim_; ++i) {
        coords[i].push_back(p.box.lo[i]);
        coords[i].push_back(p.box.hi[i]);
      }
    for (int i = 0; i < dim_; ++i)
      for (double a : coords[i])
        for (double b : coords[i])
          if (b > a) out.push_back(0.5 * (b - a));
    for (const auto& p : pieces_) {
      if (p.is_ball) out.push_back(p.radius);
      out.push_back(p.box.half_diagonal());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Smallest positive feature length (half-width or radius).
  double feature_scale() const {
    double m = INFINITY;
    for (const auto& p : pieces_) {
      if (p.is_ball) m = std::min(m, p.radius);
      for (int i = 0; i < dim_; ++i) m = std::min(m, 0.5 * (p.box.hi[i] - p.box.lo[i]));
    }
    return std::isfinite(m) ? m : 1.0;
  }

 private:
  TestMeasure(int d, MeasureForm f, std::vector<MeasurePiece> pieces)
      : dim_(d), form_(f), pieces_(std::move(pieces)) {}

  double piece_ball_mass(const MeasurePiece& p, const Point& x, double r) const {
    if (p.is_ball) return geometry::lens_area(distance(x, p.center, dim_), r, p.radius);
    switch (dim_) {
      case 1: {
        // offsets from x keep small balls exact
        const double lo = std::max(p.box.lo[0] - x[0], -r), hi = std::min(p.box.hi[0] - x[0], r);
        return hi > lo ? hi - lo : 0.0;
      }
      case 2:
        return geometry::disk_rect_area(r, p.box.lo[0] - x[0], p.box.hi[0] - x[0], p.box.lo[1] - x[1],
                                        p.box.hi[1] - x[1]);
      default:
        return geometry::ball_box_volume(r, sub(p.box.lo, x), sub(p.box.hi, x));
    }
  }

  // (int |phi|, sup |phi|) for d = 1 by sweeping the endpoints.
  std::pair<double, double> exact_1d_norms() const {
    std::vector<double> pts;
    for (const auto& p : pieces_) {
      pts.push_back(p.box.lo[0]);
      pts.push_back(p.box.hi[0]);
    }
    std::sort(pts.begin(), pts.end());
    double tv = 0, sup = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      if (pts[i + 1] <= pts[i]) continue;
      const double phi = density(Point{0.5 * (pts[i] + pts[i + 1]), 0, 0});
      tv += std::abs(phi) * (pts[i + 1] - pts[i]);
      sup = std::max(sup, std::abs(phi));
    }
    return {tv, sup};
  }

  bool pieces_disjoint() const {
    for (std::size_t i = 0; i < pieces_.size(); ++i)
      for (std::size_t j = i + 1; j < pieces_.size(); ++j) {
        const Box& a = pieces_[i].box;
        const Box& b = pieces_[j].box;
        bool sep = false;
        for (int k = 0; k < dim_; ++k)
          if (a.hi[k] <= b.lo[k] || b.hi[k] <= a.lo[k]) sep = true;
        if (!sep) return false;
      }
    return true;
  }

  int dim_;
  MeasureForm form_;
  std::vector<MeasurePiece> pieces_;
};

/// Tolerances for the nested ball integrals.
struct BallIntegralOptions {
  QuadOptions inner{1e-6, 1e-13, 4000, false};  // x integration
  QuadOptions outer{1e-5, 1e-12, 4000, false};  // r integration
  std::size_t qmc_points = 1 << 16;            // d = 3 profiles
};

/// int h(mu(B(x, r))) dx over support_box + r, with h(0) = 0.
template <class T = double, class H>
QuadResult<T> profile_integral(const TestMeasure& mu, H&& h, double r, const BallIntegralOptions& opt = {}) {
  QuadResult<T> out;
  if (!(r > 0) || mu.is_zero()) return out;
  const Box box = mu.support_box().inflated(r);
  auto f = [&](const Point& x) -> T { return h(mu.ball_mass(x, r)); };
  QuadOptions o = opt.inner;
  o.abs_tol = std::max(o.abs_tol, 1e-15 * box.volume());
  AxisBreaks br = [&](int axis, const Point& fixed) { return mu.axis_breakpoints(axis, fixed, r); };
  return integrate_box<T>(f, box, o, br, opt.qmc_points);
}

/// int |mu(B(x, r))|^alpha dx.
inline QuadResult<double> alpha_norm_profile(const TestMeasure& mu, double alpha, double r,
                                             const BallIntegralOptions& opt = {}) {
  require(alpha > 1 && alpha <= 2, "alpha-profile needs 1 < alpha <= 2");
  return profile_integral<double>(mu, [alpha](double m) { return std::pow(std::abs(m), alpha); }, r, opt);
}

/// int_0^inf [int h(mu(B(x, r))) dx] r^{-beta-1} dr, where |h(m)| behaves like
/// |m|^near_exponent at 0 (so the r-integrand behaves like r^{near_exponent d - beta - 1}).
template <class T = double, class H>
QuadResult<T> radial_profile_integral(const TestMeasure& mu, H&& h, double beta, double near_exponent,
                                      const BallIntegralOptions& opt = {}) {
  const int d = mu.dimension();
  QuadResult<T> out;
  if (mu.is_zero()) return out;
  const double e = near_exponent * d - beta - 1.0;
  require(e > -1.0 && beta > d, "radial ball integral diverges: need d < beta < alpha d");
  std::size_t evals = 0;
  auto g = [&](double r) -> T {
    auto p = profile_integral<T>(mu, h, r, opt);
    evals += p.evaluations;
    return p.value * std::pow(r, -beta - 1.0);
  };
  const double r1 = 0.5 * mu.feature_scale();
  const double r2 = 4.0 * std::max(mu.support_box().half_diagonal(), r1);
  std::vector<double> br;
  for (double b : mu.profile_breakpoints())
    if (b > r1 && b < r2) br.push_back(b);
  auto a = integrate_left_singular<T>(g, 0.0, r1, e, opt.outer);
  auto b = integrate<T>(g, r1, r2, opt.outer, br);
  auto c = integrate_half_line<T>(g, r2, beta + 1.0 - d, r2, opt.outer);
  out.value = a.value + b.value + c.value;
  out.error_estimate = a.error_estimate + b.error_estimate + c.error_estimate +
                       opt.inner.rel_tol * (std::abs(a.value) + std::abs(b.value) + std::abs(c.value));
  out.evaluations = evals;
  out.converged = a.converged && b.converged && c.converged;
  return out;
}

/// int int |mu(B(x, r))|^alpha r^{-beta-1} dx dr.
inline QuadResult<double> mab_integral(const TestMeasure& mu, double alpha, double beta,
                                       const BallIntegralOptions& opt = {}) {
  const int d = mu.dimension();
  if (!(beta > d && beta < alpha * d))
    throw ValidationError("the alpha-beta ball integral diverges unless d < beta < alpha d");
  if (mu.is_zero()) return {};
  return radial_profile_integral<double>(
      mu, [alpha](double m) { return std::pow(std::abs(m), alpha); }, beta, alpha, opt);
}

struct SignedAlphaIntegrals {
  double A = 0;
  double B = 0;
  double error_estimate = 0;
};

/// A = int int |mu(B)|^alpha dx C_beta r^{-beta-1} dr and B the same with sign(mu(B)).
inline SignedAlphaIntegrals signed_alpha_integrals(const TestMeasure& mu, double alpha, const RadiusLaw& radius,
                                                   const BallIntegralOptions& opt = {}) {
  const int d = mu.dimension();
  if (!(radius.beta > d && radius.beta < alpha * d))
    throw ValidationError("the alpha-beta ball integral diverges unless d < beta < alpha d");
  if (mu.is_zero()) return {};
  auto r = radial_profile_integral<cplx>(
      mu,
      [alpha](double m) {
        const double p = std::pow(std::abs(m), alpha);
        return cplx(p, sign_of(m) * p);
      },
      radius.beta, alpha, opt);
  const double C = radius.C_beta();
  return {C * r.value.real(), C * r.value.imag(), C * r.error_estimate};
}

/// max over the grid of profile(r) / (r^d min r^{alpha d}).
inline double fitted_envelope_constant(const TestMeasure& mu, double alpha, const std::vector<double>& radii,
                                       const BallIntegralOptions& opt = {}) {
  const int d = mu.dimension();
  double c = 0;
  for (double r : radii) {
    const double env = std::min(std::pow(r, d), std::pow(r, alpha * d));
    c = std::max(c, alpha_norm_profile(mu, alpha, r, opt).value / env);
  }
  return c;
}

/// Envelope constant from max(||mu||^alpha v_d, ||phi||_inf^{alpha-1} ||mu|| v_d^alpha).
inline double a_priori_envelope_constant(const TestMeasure& mu, double alpha) {
  const int d = mu.dimension();
  const double vd = unit_ball_volume(d), tv = mu.total_variation(), sup = mu.sup_density();
  return std::max(std::pow(tv, alpha) * vd, std::pow(sup, alpha - 1) * tv * std::pow(vd, alpha));
}

}  // namespace coxballs
