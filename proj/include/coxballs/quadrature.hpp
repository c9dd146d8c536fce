#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <type_traits>
#include <vector>

#include <boost/random/sobol.hpp>

#include "core.hpp"

namespace coxballs {

using cplx = std::complex<double>;

template <class T>
struct QuadResult {
  T value{};
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = true;
};

struct QuadOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  std::size_t max_subdivisions = 4000;
  bool throw_on_failure = true;

  QuadOptions tightened(double factor) const {
    QuadOptions o = *this;
    o.rel_tol *= factor;
    o.abs_tol *= factor;
    return o;
  }
};

namespace detail {

inline double re_part(double x) { return x; }
inline double im_part(double) { return 0.0; }
inline double re_part(const cplx& z) { return z.real(); }
inline double im_part(const cplx& z) { return z.imag(); }

inline bool finite_value(double x) { return std::isfinite(x); }
inline bool finite_value(const cplx& z) {
  return std::isfinite(z.real()) && std::isfinite(z.imag());
}

// Gauss-Kronrod 7-15 abscissae and weights (QUADPACK qk15).
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {0.129484966168869693270611432679082,
                                  0.279705391489276667901467771423780,
                                  0.381830050505118944950369775488975,
                                  0.417959183673469387755102040816327};

// QUADPACK-style error heuristic for one real component.
inline double component_error(double resk, double resg, double resabs, double resasc, double h) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double err = std::abs((resk - resg) * h);
  resabs *= std::abs(h);
  resasc *= std::abs(h);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  if (resabs > std::numeric_limits<double>::min() / (50 * eps)) err = std::max(50 * eps * resabs, err);
  return err;
}

template <class T>
struct Segment {
  double a, b;
  T value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class T, class F>
Segment<T> gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  T fv[15];
  fv[7] = f(c);
  for (int j = 0; j < 7; ++j) {
    fv[j] = f(c - h * kXgk[j]);
    fv[14 - j] = f(c + h * kXgk[j]);
  }
  T resk = fv[7] * kWgk[7];
  T resg = fv[7] * kWg[3];
  for (int j = 0; j < 7; ++j) {
    resk += kWgk[j] * (fv[j] + fv[14 - j]);
    if (j % 2 == 1) resg += kWg[j / 2] * (fv[j] + fv[14 - j]);
  }
  for (const T& v : fv)
    if (!finite_value(v)) throw QuadratureError("non-finite integrand value", 0.0, INFINITY);
  double err_re, err_im;
  {
    double rk = re_part(resk), rh = 0.5 * rk, ra = kWgk[7] * std::abs(re_part(fv[7]));
    double rs = kWgk[7] * std::abs(re_part(fv[7]) - rh);
    for (int j = 0; j < 7; ++j) {
      ra += kWgk[j] * (std::abs(re_part(fv[j])) + std::abs(re_part(fv[14 - j])));
      rs += kWgk[j] * (std::abs(re_part(fv[j]) - rh) + std::abs(re_part(fv[14 - j]) - rh));
    }
    err_re = component_error(rk, re_part(resg), ra, rs, h);
  }
  if constexpr (std::is_same_v<T, cplx>) {
    double ik = im_part(resk), ih = 0.5 * ik, ia = kWgk[7] * std::abs(im_part(fv[7]));
    double is = kWgk[7] * std::abs(im_part(fv[7]) - ih);
    for (int j = 0; j < 7; ++j) {
      ia += kWgk[j] * (std::abs(im_part(fv[j])) + std::abs(im_part(fv[14 - j])));
      is += kWgk[j] * (std::abs(im_part(fv[j]) - ih) + std::abs(im_part(fv[14 - j]) - ih));
    }
    err_im = component_error(ik, im_part(resg), ia, is, h);
  } else {
    err_im = 0.0;
  }
  return {a, b, resk * h, std::hypot(err_re, err_im)};
}

inline std::vector<double> cut_points(double a, double b, const std::vector<double>& breaks) {
  std::vector<double> pts{a};
  for (double p : breaks)
    if (p > a && p < b && std::isfinite(p)) pts.push_back(p);
  std::sort(pts.begin() + 1, pts.end());
  pts.push_back(b);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b], split first at
/// the given breakpoints. T is double or std::complex<double>.
template <class T = double, class F>
QuadResult<T> integrate(F&& f, double a, double b, const QuadOptions& opt = {},
                        const std::vector<double>& breakpoints = {}) {
  QuadResult<T> out;
  if (!(b > a)) {
    if (a == b) return out;
    auto r = integrate<T>(f, b, a, opt, breakpoints);
    r.value = -r.value;
    return r;
  }
  using Seg = detail::Segment<T>;
  std::priority_queue<Seg> heap;
  std::vector<Seg> done;
  const auto pts = detail::cut_points(a, b, breakpoints);
  T total{};
  double total_err = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    Seg s = detail::gk15<T>(f, pts[i], pts[i + 1]);
    out.evaluations += 15;
    total += s.value;
    total_err += s.error;
    heap.push(s);
  }
  std::size_t splits = 0;
  auto tolerance = [&] { return std::max(opt.abs_tol, opt.rel_tol * std::abs(total)); };
  while (!heap.empty() && total_err > tolerance()) {
    if (splits >= opt.max_subdivisions) break;
    Seg s = heap.top();
    heap.pop();
    const double mid = 0.5 * (s.a + s.b);
    if (!(mid > s.a && mid < s.b) || (s.b - s.a) < 1e-14 * std::max(std::abs(s.a), std::abs(s.b))) {
      done.push_back(s);  // cannot refine further in floating point
      continue;
    }
    Seg l = detail::gk15<T>(f, s.a, mid);
    Seg r = detail::gk15<T>(f, mid, s.b);
    out.evaluations += 30;
    ++splits;
    total += l.value + r.value - s.value;
    total_err += l.error + r.error - s.error;
    heap.push(l);
    heap.push(r);
  }
  while (!heap.empty()) {
    done.push_back(heap.top());
    heap.pop();
  }
  std::sort(done.begin(), done.end(), [](const Seg& x, const Seg& y) { return x.a < y.a; });
  T sum{};
  double err = 0.0;
  for (const auto& s : done) {
    sum += s.value;
    err += s.error;
  }
  out.value = sum;
  out.error_estimate = err;
  out.converged = err <= std::max(opt.abs_tol, opt.rel_tol * std::abs(sum)) * (1 + 1e-12);
  if (!out.converged && splits >= opt.max_subdivisions && opt.throw_on_failure)
    throw QuadratureError("adaptive quadrature exhausted its subdivision budget",
                          detail::re_part(sum), err);
  // Stagnation at floating-point resolution is reported through `converged`.
  return out;
}

/// Integral over [a, inf) of f, where |f(x)| decays at least like x^{-p}, p > 1.
/// Uses x = a + c (u^{-1/(p-1)} - 1), u in (0, 1].
template <class T = double, class F>
QuadResult<T> integrate_half_line(F&& f, double a, double decay, double c = 1.0,
                                  const QuadOptions& opt = {},
                                  const std::vector<double>& breakpoints = {}) {
  require(decay > 1.0, "half-line integration needs a decay exponent above 1");
  require(c > 0, "half-line scale must be positive");
  const double q = 1.0 / (decay - 1.0);
  auto g = [&](double u) -> T {
    const double w = std::pow(u, -q);
    const double x = a + c * (w - 1.0);
    if (!std::isfinite(x)) return T{};
    return f(x) * (c * q * w / u);
  };
  std::vector<double> ub;
  for (double x : breakpoints)
    if (x > a && std::isfinite(x)) ub.push_back(std::pow(1.0 + (x - a) / c, -(decay - 1.0)));
  return integrate<T>(g, 0.0, 1.0, opt, ub);
}

/// Integral over (-inf, b] of f with algebraic decay p at -inf.
template <class T = double, class F>
QuadResult<T> integrate_left_half_line(F&& f, double b, double decay, double c = 1.0,
                                       const QuadOptions& opt = {},
                                       const std::vector<double>& breakpoints = {}) {
  std::vector<double> mb;
  for (double x : breakpoints) mb.push_back(-x);
  return integrate_half_line<T>([&](double x) { return f(-x); }, -b, decay, c, opt, mb);
}

/// Integral over [a, b] of f with an integrable algebraic singularity (x-a)^e,
/// e > -1, at the left end. Substitutes x = a + (b-a) t^q with q = 2/(e+1).
template <class T = double, class F>
QuadResult<T> integrate_left_singular(F&& f, double a, double b, double e,
                                      const QuadOptions& opt = {}) {
  require(e > -1.0, "endpoint singularity exponent must exceed -1");
  const double q = std::max(1.0, 2.0 / (e + 1.0));
  if (q == 1.0) return integrate<T>(f, a, b, opt);
  const double len = b - a;
  auto g = [&](double t) -> T {
    const double tq1 = std::pow(t, q - 1.0);
    // the substituted integrand vanishes like t at t = 0; an underflowed offset would hit the singularity
    if (len * tq1 * t == 0) return T{};
    return f(a + len * tq1 * t) * (len * q * tq1);
  };
  return integrate<T>(g, 0.0, 1.0, opt);
}

/// F(s, X) = integral over [X, inf) of e^{iv} v^{-s} dv for s > 0, X > 0.
/// Adaptive rule up to X0 = max(X, 64), integration-by-parts series beyond.
inline QuadResult<cplx> oscillatory_power_tail(double s, double X, const QuadOptions& opt = {}) {
  require(s > 0 && X > 0, "oscillatory tail needs s > 0 and X > 0");
  const double X0 = std::max(X, 64.0);
  QuadResult<cplx> head;
  if (X < X0) {
    const double period = 2 * kPi;
    std::vector<double> br;
    for (double p = X + period; p < X0; p += period) br.push_back(p);
    head = integrate<cplx>([s](double v) { return std::polar(std::pow(v, -s), v); }, X, X0,
                           opt.tightened(0.5), br);
  }
  // i e^{iX0} X0^{-s} sum_k (-i)^k (s)_k X0^{-k}
  cplx sum = 0, term = 1;
  double last = INFINITY, remainder = 0;
  for (int k = 0; k < 200; ++k) {
    const double mag = std::abs(term);
    if (mag > last) break;  // asymptotic series starts to diverge
    sum += term;
    last = mag;
    remainder = mag;
    if (mag < 1e-18 * std::abs(sum)) break;
    term *= cplx(0, -1) * (s + k) / X0;
  }
  const cplx tail = cplx(0, 1) * std::polar(std::pow(X0, -s), X0) * sum;
  QuadResult<cplx> out;
  out.value = head.value + tail;
  out.error_estimate = head.error_estimate + remainder * std::pow(X0, -s) * 1e-3;
  out.evaluations = head.evaluations;
  out.converged = head.converged;
  return out;
}

/// Low-discrepancy (Sobol) rule over a box; error estimated from the two halves
/// of the point set.
template <class T = double, class F>
QuadResult<T> integrate_qmc(F&& f, const Box& box, std::size_t n_points) {
  require(n_points >= 2, "QMC needs at least two points");
  boost::random::sobol gen(static_cast<unsigned>(box.dim));
  const double vol = box.volume();
  T first{}, second{};
  const std::size_t half = n_points / 2;
  for (std::size_t k = 0; k < n_points; ++k) {
    Point p{0, 0, 0};
    for (int i = 0; i < box.dim; ++i) {
      const double u = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
      p[i] = box.lo[i] + u * (box.hi[i] - box.lo[i]);
    }
    (k < half ? first : second) += f(p);
  }
  QuadResult<T> out;
  const T m1 = first / static_cast<double>(half);
  const T m2 = second / static_cast<double>(n_points - half);
  out.value = (first + second) * (vol / static_cast<double>(n_points));
  out.error_estimate = std::abs(m1 - m2) * vol;
  out.evaluations = n_points;
  return out;
}

/// Per-axis breakpoints for the inner axes of a tensor rule: given the axis and
/// the already-fixed outer coordinates.
using AxisBreaks = std::function<std::vector<double>(int axis, const Point& fixed)>;

/// Integral of f over a box: nested adaptive rules for d <= 2, Sobol QMC for d = 3.
template <class T = double, class F>
QuadResult<T> integrate_box(F&& f, const Box& box, const QuadOptions& opt = {},
                            const AxisBreaks& breaks = {}, std::size_t qmc_points = 1 << 16) {
  auto br = [&](int axis, const Point& fixed) {
    return breaks ? breaks(axis, fixed) : std::vector<double>{};
  };
  if (box.dim == 1) {
    return integrate<T>([&](double x) { return f(Point{x, 0, 0}); }, box.lo[0], box.hi[0], opt,
                        br(0, Point{0, 0, 0}));
  }
  if (box.dim == 2) {
    std::size_t evals = 0;
    double inner_err = 0;
    const double width = box.hi[0] - box.lo[0];
    QuadOptions inner = opt;
    inner.abs_tol = opt.abs_tol / std::max(width, 1e-300);
    auto outer = [&](double x0) -> T {
      Point fixed{x0, 0, 0};
      auto r = integrate<T>([&](double x1) { return f(Point{x0, x1, 0}); }, box.lo[1],
                            box.hi[1], inner, br(1, fixed));
      evals += r.evaluations;
      inner_err = std::max(inner_err, r.error_estimate);
      return r.value;
    };
    auto r = integrate<T>(outer, box.lo[0], box.hi[0], opt, br(0, Point{0, 0, 0}));
    r.evaluations = evals;
    r.error_estimate += inner_err * width;
    return r;
  }
  return integrate_qmc<T>(f, box, qmc_points);
}

/// Values on a regular grid: origin + spacing * index along each axis.
template <class T = double>
struct Grid {
  int dim = 1;
  std::array<std::size_t, 3> n{1, 1, 1};
  Point origin{0, 0, 0};
  double spacing = 1.0;
  std::vector<T> values;

  std::size_t size() const { return n[0] * n[1] * n[2]; }
  std::size_t index(std::size_t i, std::size_t j = 0, std::size_t k = 0) const {
    return (k * n[1] + j) * n[0] + i;
  }
  Point node(std::size_t i, std::size_t j = 0, std::size_t k = 0) const {
    return {origin[0] + spacing * static_cast<double>(i),
            dim > 1 ? origin[1] + spacing * static_cast<double>(j) : 0.0,
            dim > 2 ? origin[2] + spacing * static_cast<double>(k) : 0.0};
  }
  static Grid covering(const Box& b, double spacing) {
    Grid g;
    g.dim = b.dim;
    g.spacing = spacing;
    for (int a = 0; a < b.dim; ++a) {
      g.origin[a] = b.lo[a];
      g.n[a] = static_cast<std::size_t>(std::ceil((b.hi[a] - b.lo[a]) / spacing)) + 1;
    }
    g.values.assign(g.size(), T{});
    return g;
  }
};

/// Discretized convolution kernel. Separable kernels give a 1-D density; the
/// others a density of the offset vector. Both are assumed radially symmetric.
struct ConvolutionKernel {
  bool separable = true;
  std::function<double(double)> density_1d;
  std::function<double(const Point&)> density;
  double bandwidth = 1.0;
  double reach = 1.0;
};

/// Discrete convolution with the kernel, weights normalized to unit mass.
/// Values outside the grid count as zero, so results within `reach` of the
/// grid edge are truncated.
template <class T>
Grid<T> convolve_grid(const Grid<T>& in, const ConvolutionKernel& k) {
  const double h = in.spacing;
  if (h > k.bandwidth / 8.0 * (1 + 1e-12))
    throw ValidationError("grid spacing does not resolve the kernel bandwidth (need 8 points per bandwidth)");
  const int m = static_cast<int>(std::ceil(k.reach / h));
  Grid<T> out = in;
  if (k.separable) {
    std::vector<double> w(2 * m + 1);
    double tot = 0;
    for (int j = -m; j <= m; ++j) tot += (w[j + m] = k.density_1d(j * h));
    for (auto& x : w) x /= tot;
    Grid<T> cur = in;
    for (int axis = 0; axis < in.dim; ++axis) {
      Grid<T> nxt = cur;
      for (std::size_t kk = 0; kk < in.n[2]; ++kk)
        for (std::size_t jj = 0; jj < in.n[1]; ++jj)
          for (std::size_t ii = 0; ii < in.n[0]; ++ii) {
            std::array<long, 3> idx{static_cast<long>(ii), static_cast<long>(jj), static_cast<long>(kk)};
            T acc{};
            for (int j = -m; j <= m; ++j) {
              auto s = idx;
              s[axis] += j;
              if (s[axis] < 0 || s[axis] >= static_cast<long>(in.n[axis])) continue;
              acc += w[j + m] * cur.values[in.index(s[0], s[1], s[2])];
            }
            nxt.values[in.index(ii, jj, kk)] = acc;
          }
      cur = std::move(nxt);
    }
    return cur;
  }
  // general stencil: cell-averaged density by 4^d sub-samples
  struct Tap { int o[3]; double w; };
  std::vector<Tap> taps;
  double tot = 0;
  const int mz = in.dim > 2 ? m : 0, my = in.dim > 1 ? m : 0;
  for (int c = -mz; c <= mz; ++c)
    for (int b = -my; b <= my; ++b)
      for (int a = -m; a <= m; ++a) {
        double acc = 0;
        int cnt = 0;
        for (int sz = 0; sz < (in.dim > 2 ? 4 : 1); ++sz)
          for (int sy = 0; sy < (in.dim > 1 ? 4 : 1); ++sy)
            for (int sx = 0; sx < 4; ++sx) {
              Point p{(a + (sx + 0.5) / 4 - 0.5) * h, in.dim > 1 ? (b + (sy + 0.5) / 4 - 0.5) * h : 0.0,
                      in.dim > 2 ? (c + (sz + 0.5) / 4 - 0.5) * h : 0.0};
              acc += k.density(p);
              ++cnt;
            }
        if (acc > 0) {
          taps.push_back({{a, b, c}, acc / cnt});
          tot += acc / cnt;
        }
      }
  for (auto& t : taps) t.w /= tot;
  for (std::size_t kk = 0; kk < in.n[2]; ++kk)
    for (std::size_t jj = 0; jj < in.n[1]; ++jj)
      for (std::size_t ii = 0; ii < in.n[0]; ++ii) {
        T acc{};
        for (const auto& t : taps) {
          long s0 = static_cast<long>(ii) + t.o[0], s1 = static_cast<long>(jj) + t.o[1],
               s2 = static_cast<long>(kk) + t.o[2];
          if (s0 < 0 || s1 < 0 || s2 < 0 || s0 >= static_cast<long>(in.n[0]) ||
              s1 >= static_cast<long>(in.n[1]) || s2 >= static_cast<long>(in.n[2]))
            continue;
          acc += t.w * in.values[in.index(s0, s1, s2)];
        }
        out.values[in.index(ii, jj, kk)] = acc;
      }
  return out;
}

/// Tensor cubic-convolution (Catmull-Rom) interpolation on a grid; the stencil
/// is clamped at the grid edges.
template <class T>
T interpolate_cubic(const Grid<T>& g, const Point& p) {
  auto weights = [](double t, double w[4]) {
    const double t2 = t * t, t3 = t2 * t;
    w[0] = 0.5 * (-t3 + 2 * t2 - t);
    w[1] = 0.5 * (3 * t3 - 5 * t2 + 2);
    w[2] = 0.5 * (-3 * t3 + 4 * t2 + t);
    w[3] = 0.5 * (t3 - t2);
  };
  long base[3] = {0, 0, 0};
  double w[3][4] = {{0, 1, 0, 0}, {0, 1, 0, 0}, {0, 1, 0, 0}};
  for (int a = 0; a < g.dim; ++a) {
    double u = (p[a] - g.origin[a]) / g.spacing;
    u = std::clamp(u, 0.0, static_cast<double>(g.n[a] - 1));
    long i = std::min(static_cast<long>(std::floor(u)), static_cast<long>(g.n[a]) - 2);
    i = std::max(i, 0L);
    base[a] = i;
    weights(u - static_cast<double>(i), w[a]);
  }
  auto clampi = [&](long i, int a) {
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(g.n[a]) - 1));
  };
  T acc{};
  const int nz = g.dim > 2 ? 4 : 1, ny = g.dim > 1 ? 4 : 1;
  for (int c = 0; c < nz; ++c)
    for (int b = 0; b < ny; ++b)
      for (int a = 0; a < 4; ++a) {
        const double wt = w[0][a] * (g.dim > 1 ? w[1][b] : 1.0) * (g.dim > 2 ? w[2][c] : 1.0);
        if (wt == 0) continue;
        std::size_t i = clampi(base[0] - 1 + a, 0);
        std::size_t j = g.dim > 1 ? clampi(base[1] - 1 + b, 1) : 0;
        std::size_t k = g.dim > 2 ? clampi(base[2] - 1 + c, 2) : 0;
        acc += wt * g.values[g.index(i, j, k)];
      }
  return acc;
}

}  // namespace coxballs
