#pragma once

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "laws.hpp"
#include "measures.hpp"
#include "pointprocess.hpp"
#include "quadrature.hpp"
#include "random.hpp"

namespace coxballs {

enum class RegimeKind { local_stable, local_intermediate, local_smallballs, global_stable, global_poisson, global_gamma };

inline std::string to_string(RegimeKind k) {
  switch (k) {
    case RegimeKind::local_stable: return "local-stable";
    case RegimeKind::local_intermediate: return "local-intermediate";
    case RegimeKind::local_smallballs: return "local-smallballs";
    case RegimeKind::global_stable: return "global-stable";
    case RegimeKind::global_poisson: return "global-poisson";
    case RegimeKind::global_gamma: return "global-gamma";
  }
  return "?";
}

/// Limit regime and normalization n(rho) = n_coefficient * rho^n_exponent.
struct Regime {
  RegimeKind kind = RegimeKind::local_stable;
  double alpha = 2;
  double gamma = 0;  // beta / d, small-ball kinds only
  double a = 0;      // limit constant, intermediate kinds only
  double n_exponent = 0;
  double n_coefficient = 1;

  bool is_local() const {
    return kind == RegimeKind::local_stable || kind == RegimeKind::local_intermediate ||
           kind == RegimeKind::local_smallballs;
  }
  bool is_small_balls() const { return kind == RegimeKind::local_smallballs || kind == RegimeKind::global_gamma; }
  bool is_intermediate() const {
    return kind == RegimeKind::local_intermediate || kind == RegimeKind::global_poisson;
  }
  double n(double rho) const { return n_coefficient * std::pow(rho, n_exponent); }

  std::string summary() const {
    char buf[256];
    std::string s = to_string(kind);
    if (is_intermediate()) {
      std::snprintf(buf, sizeof buf, ", a=%.6g", a);
      s += buf;
    }
    if (is_small_balls()) {
      std::snprintf(buf, sizeof buf, ", gamma=%.6g", gamma);
      s += buf;
    }
    if (n_exponent == 0 && n_coefficient == 1)
      s += ", n(rho)=1";
    else {
      std::snprintf(buf, sizeof buf, ", n(rho)=%.6g*rho^%.6g", n_coefficient, n_exponent);
      s += buf;
    }
    return s;
  }
};

inline bool exponents_equal(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

inline Regime classify_regime(const ModelSpec& m) {
  m.validate();
  Regime g;
  const double beta = m.radius.beta;
  const int d = m.d;
  g.alpha = m.marks.alpha();
  const auto& s = m.scaling;
  auto need_gamma = [&] {
    g.gamma = beta / d;
    if (!(g.gamma > 1 && g.gamma < g.alpha))
      throw ValidationError("small-ball regimes need 1 < gamma = beta/d < alpha (gamma = " + std::to_string(g.gamma) +
                            ")");
  };
  if (s.scenario == Scenario::local) {
    const double e = beta - s.v;  // lambda rho^beta = c_lambda rho^e
    if (exponents_equal(s.v, beta)) {
      g.kind = RegimeKind::local_intermediate;
      g.a = s.c_lambda;
    } else if (s.v > beta) {
      g.kind = RegimeKind::local_stable;
      g.n_exponent = e / g.alpha;
      g.n_coefficient = std::pow(s.c_lambda, 1.0 / g.alpha);
    } else {
      g.kind = RegimeKind::local_smallballs;
      need_gamma();
      g.n_exponent = e / g.gamma;
      g.n_coefficient = std::pow(s.c_lambda, 1.0 / g.gamma);
    }
    return g;
  }
  const double K = s.c_kappa * s.c_lambda;
  const double e = beta - s.u - s.v;
  if (exponents_equal(s.u + s.v, beta)) {
    g.kind = RegimeKind::global_poisson;
    g.a = K;
  } else if (s.u + s.v > beta) {
    g.kind = RegimeKind::global_stable;
    g.n_exponent = e / g.alpha;
    g.n_coefficient = std::pow(K, 1.0 / g.alpha);
  } else {
    if (!(s.u + s.v > 0))
      throw ValidationError(
          "global small-ball regime needs u + v > 0 (the mean number of balls kappa*lambda must diverge); got u + v = " +
          std::to_string(s.u + s.v));
    g.kind = RegimeKind::global_gamma;
    need_gamma();
    g.n_exponent = e / g.gamma;
    g.n_coefficient = std::pow(K, 1.0 / g.gamma);
  }
  return g;
}

/// M(mu) = sum over balls of m * mu(B(x, r)).
inline double evaluate_field(const Realization& real, const TestMeasure& mu) {
  require(real.dim == mu.dimension() || real.balls.empty(), "realization and measure dimensions differ");
  std::vector<double> terms;
  terms.reserve(real.balls.size());
  for (const auto& b : real.balls) terms.push_back(b.m * mu.ball_mass(b.x, b.r));
  return pairwise_sum(terms);
}

/// g(x) = E[mu(B(x, rho R)); rho R <= r_max].
inline double radius_averaged_mass(const ModelSpec& m, double rho, const TestMeasure& mu, const Point& x,
                                   double r_max, const QuadOptions& opt = {1e-10, 1e-14, 2000, false}) {
  const double rlo = std::max(rho * m.radius.r0, mu.support_distance(x));
  const double cover = mu.cover_radius(x);
  const double rhi = std::min(cover, r_max);
  double v = 0;
  if (rhi > rlo) {
    const double beta = m.radius.beta, C = beta * std::pow(rho * m.radius.r0, beta);
    std::vector<double> br;
    for (double b : mu.radial_breakpoints(x))
      if (b > rlo && b < rhi) br.push_back(b);
    v = integrate([&](double r) { return mu.ball_mass(x, r) * C * std::pow(r, -beta - 1); }, rlo, rhi, opt, br).value;
  }
  const double from = std::max(cover, rho * m.radius.r0);
  if (r_max > from)
    v += mu.total_mass() *
         (m.radius.survival_scaled(from, rho) - (std::isfinite(r_max) ? m.radius.survival_scaled(r_max, rho) : 0.0));
  return v;
}

/// J(y) = E[mu(B(y + Z, rho R)); rho R <= r_max] tabulated over the center window.
class ConditionalMeanTable {
 public:
  ConditionalMeanTable(const ModelSpec& m, double rho, const TestMeasure& mu, double r_max, double window_reach,
                       std::size_t points_per_axis = 256, std::size_t max_nodes = std::size_t{1} << 22)
      : dim_(m.d) {
    require(std::isfinite(r_max), "conditional-mean table needs a finite radius cap");
    if (m.d == 3) throw CapabilityError("conditional-mean table is implemented for d <= 2");
    const auto conv = m.kernel.convolution();
    window_ = mu.support_box().inflated(window_reach);
    const Box cover = window_.inflated(conv.reach);
    double width = 0;
    for (int i = 0; i < m.d; ++i) width = std::max(width, cover.hi[i] - cover.lo[i]);
    // kinks of g at the support edges make the discrete convolution second-order in the spacing
    const double fine = m.d == 1 ? m.kernel.bandwidth / 64.0 : m.kernel.bandwidth / 8.0;
    const double spacing = std::min(width / static_cast<double>(points_per_axis - 1), fine);
    Grid<double> g = Grid<double>::covering(cover, spacing);
    if (g.size() > max_nodes)
      throw CapabilityError("conditional-mean grid would need " + std::to_string(g.size()) +
                            " nodes; reduce the truncation radius");
    for (std::size_t j = 0; j < g.n[1]; ++j)
      for (std::size_t i = 0; i < g.n[0]; ++i)
        g.values[g.index(i, j)] = radius_averaged_mass(m, rho, mu, g.node(i, j), r_max);
    table_ = convolve_grid(g, conv);

    // check the interpolated table against direct quadrature at 16 centers
    RandomStream rng(0x7AB1E, 0);
    double worst = 0;
    for (int k = 0; k < 16; ++k) {
      Point y{0, 0, 0};
      for (int i = 0; i < m.d; ++i) y[i] = window_.lo[i] + (window_.hi[i] - window_.lo[i]) * rng.uniform();
      const double direct = direct_value(m, rho, mu, y, r_max);
      worst = std::max(worst, std::abs(direct - (*this)(y)));
    }
    error_bound_ = 2 * worst;
  }

  double operator()(const Point& y) const {
    if (!window_.inflated(1e-9).contains(y)) return 0.0;
    return interpolate_cubic(table_, y);
  }
  /// Twice the worst deviation seen at the random check points.
  double error_bound() const { return error_bound_; }
  const Grid<double>& grid() const { return table_; }

  /// J(y) by nested adaptive quadrature over the kernel offset.
  static double direct_value(const ModelSpec& m, double rho, const TestMeasure& mu, const Point& y, double r_max) {
    const double reach = m.kernel.family == KernelFamily::gaussian ? 9.0 * m.kernel.bandwidth : m.kernel.bandwidth;
    Box zb{m.d, {0, 0, 0}, {0, 0, 0}};
    for (int i = 0; i < m.d; ++i) {
      zb.lo[i] = -reach;
      zb.hi[i] = reach;
    }
    QuadOptions o{1e-7, 1e-13, 4000, false};
    auto f = [&](const Point& z) {
      const double k = m.kernel.density(z);
      return k > 0 ? k * radius_averaged_mass(m, rho, mu, add(y, z), r_max, {1e-9, 1e-14, 2000, false}) : 0.0;
    };
    AxisBreaks br;
    if (m.kernel.family == KernelFamily::uniform_ball) {
      br = [&](int axis, const Point& fixed) {
        std::vector<double> b;
        const double h = m.kernel.bandwidth;
        if (axis == 0) return std::vector<double>{-h, h};
        const double s = std::sqrt(std::max(0.0, h * h - fixed[0] * fixed[0]));
        b.push_back(-s);
        b.push_back(s);
        return b;
      };
    }
    return integrate_box<double>(f, zb, o, br).value;
  }

 private:
  int dim_;
  Box window_;
  Grid<double> table_;
  double error_bound_ = 0;
};

/// E[M(mu) | centers] = mean mark * lambda * sum_y J(y).
inline double conditional_mean(const std::vector<CenterRecord>& centers, const ModelSpec& m, double rho,
                               const ConditionalMeanTable* table) {
  const double mbar = m.marks.mean();
  if (mbar == 0 || centers.empty()) return 0.0;
  require(table != nullptr, "non-centered marks need a conditional-mean table");
  std::vector<double> terms;
  terms.reserve(centers.size());
  for (const auto& c : centers) terms.push_back((*table)(c.y));
  return mbar * m.scaling.lambda(rho) * pairwise_sum(terms);
}

struct FluctuationSample {
  std::uint64_t seed_index = 0;
  double rho = 0;
  double value = 0;
  double centering = 0;
  double normalized = 0;
};

struct FieldOptions {
  std::optional<double> r_max;       // explicit radius cap
  bool auto_truncation = false;      // pick the cap from the bias target
  double bias_target_fraction = 1e-3;  // auto cap keeps the truncation bias below this times n(rho)
  double kernel_eps = 1e-6;
  unsigned threads = 1;
};

struct FluctuationRun {
  Regime regime;
  double n = 1;
  double r_max = INFINITY;
  bool windowed = false;
  double truncation_bias = 0;
  double window_bias = 0;
  double centering_error = 0;
  std::vector<FluctuationSample> samples;
};

/// Run fn(i) for i in [0, n) on `threads` workers; results must be written by index.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// N replicates of (M(mu) - E[M(mu)|centers]) / n(rho). Replicate i draws from
/// stream (seed, i).
inline FluctuationRun sample_fluctuations(const ModelSpec& m, const TestMeasure& mu, double rho, std::size_t N,
                                          std::uint64_t seed, const FieldOptions& opt = {}) {
  require(mu.dimension() == m.d, "measure dimension must match the model");
  FluctuationRun run;
  run.regime = classify_regime(m);
  run.n = run.regime.n(rho);
  const bool centered = m.marks.mean() == 0;
  if (opt.r_max) run.r_max = *opt.r_max;
  if (!centered || opt.auto_truncation) {
    if (!opt.r_max) run.r_max = auto_truncation_radius(m, rho, mu, opt.bias_target_fraction * run.n);
  }
  run.windowed = !centered;
  run.truncation_bias = truncation_bias_bound(m, rho, mu, run.r_max);
  SamplerOptions so;
  so.r_max = run.r_max;
  so.windowed = run.windowed;
  so.kernel_eps = opt.kernel_eps;
  std::optional<ConditionalMeanTable> table;
  if (run.windowed) {
    run.window_bias = center_window_bias_bound(m, rho, mu, opt.kernel_eps);
    table.emplace(m, rho, mu, run.r_max, run.r_max + m.kernel.reach(opt.kernel_eps));
    run.centering_error = table->error_bound();
  }
  const Box target = mu.support_box();
  run.samples.resize(N);
  parallel_for(N, opt.threads, [&](std::size_t i) {
    RandomStream rng(seed, i);
    const auto real = sample_realization(m, rho, target, rng, so);
    FluctuationSample s;
    s.seed_index = i;
    s.rho = rho;
    s.value = evaluate_field(real, mu);
    s.centering = table ? conditional_mean(real.centers, m, rho, &*table) : 0.0;
    s.normalized = (s.value - s.centering) / run.n;
    run.samples[i] = s;
  });
  return run;
}

}  // namespace coxballs
