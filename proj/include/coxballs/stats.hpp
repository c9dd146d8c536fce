#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "core.hpp"
#include "limits.hpp"

namespace coxballs {

/// (1/N) sum_j exp(i theta x_j) on each theta, with pairwise summation.
inline std::vector<cplx> ecf(const std::vector<double>& samples, const std::vector<double>& thetas) {
  if (samples.empty()) throw ValidationError("empirical characteristic function needs at least one sample");
  const double N = static_cast<double>(samples.size());
  std::vector<cplx> out;
  out.reserve(thetas.size());
  std::vector<double> c(samples.size()), s(samples.size());
  for (double th : thetas) {
    if (th == 0) {
      out.emplace_back(1.0, 0.0);
      continue;
    }
    for (std::size_t j = 0; j < samples.size(); ++j) {
      c[j] = std::cos(th * samples[j]);
      s[j] = std::sin(th * samples[j]);
    }
    out.emplace_back(pairwise_sum(c) / N, pairwise_sum(s) / N);
  }
  return out;
}

/// Default theta grid: 41 points on [-4, 4].
inline std::vector<double> default_theta_grid(int points = 41, double half_width = 4.0) {
  require(points >= 2, "theta grid needs at least two points");
  std::vector<double> t(points);
  for (int i = 0; i < points; ++i) t[i] = -half_width + 2 * half_width * i / (points - 1);
  // exact zero at the center of odd grids
  if (points % 2 == 1) t[points / 2] = 0.0;
  return t;
}

struct CFReport {
  std::vector<double> thetas;
  std::vector<cplx> empirical;
  std::vector<cplx> theoretical;
  std::vector<double> theory_error;  // quadrature error estimate of each theoretical value
  std::vector<double> se;            // sqrt(2 / N) away from theta = 0
  std::vector<double> z;             // |empirical - theoretical| / se
  double sup_deviation = 0;
  double sup_z = 0;
  double bias_allowance = 0;
  double threshold_z = 3;
  std::size_t N = 0;
  bool pass = false;
};

/// Compares the empirical CF with a theoretical one on the grid. PASS when
/// every deviation is below threshold_z * se + bias_allowance + quadrature error.
inline CFReport compare(const std::vector<double>& samples, const std::function<CFValue(double)>& theory,
                        const std::vector<double>& thetas, double bias_allowance = 0.0, double threshold_z = 3.0) {
  require(!thetas.empty(), "comparison needs a non-empty theta grid");
  require(bias_allowance >= 0, "bias allowance must be nonnegative");
  CFReport r;
  r.thetas = thetas;
  r.N = samples.size();
  r.bias_allowance = bias_allowance;
  r.threshold_z = threshold_z;
  r.empirical = ecf(samples, thetas);
  const double se = std::sqrt(2.0 / static_cast<double>(r.N));
  r.pass = true;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const CFValue v = theory(thetas[i]);
    r.theoretical.push_back(v.value);
    r.theory_error.push_back(v.error_estimate);
    const double s = thetas[i] == 0 ? 0.0 : se;
    r.se.push_back(s);
    const double dev = std::abs(r.empirical[i] - v.value);
    r.z.push_back(s > 0 ? dev / s : (dev > 0 ? INFINITY : 0.0));
    r.sup_deviation = std::max(r.sup_deviation, dev);
    r.sup_z = std::max(r.sup_z, r.z.back());
    if (dev > threshold_z * s + bias_allowance + v.error_estimate) r.pass = false;
  }
  return r;
}

/// Two samples against each other, with the standard error of a difference.
inline CFReport compare_samples(const std::vector<double>& a, const std::vector<double>& b,
                                const std::vector<double>& thetas, double threshold_z = 3.0) {
  const auto eb = ecf(b, thetas);
  std::size_t i = 0;
  auto r = compare(a, [&](double) { return CFValue{eb[i++], 0.0}; }, thetas, 0.0, threshold_z);
  const double s = std::sqrt(2.0 / static_cast<double>(a.size()) + 2.0 / static_cast<double>(b.size()));
  r.pass = true;
  r.sup_z = 0;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    r.se[k] = thetas[k] == 0 ? 0.0 : s;
    const double dev = std::abs(r.empirical[k] - r.theoretical[k]);
    r.z[k] = r.se[k] > 0 ? dev / r.se[k] : 0.0;
    r.sup_z = std::max(r.sup_z, r.z[k]);
    if (dev > threshold_z * r.se[k]) r.pass = false;
  }
  return r;
}

struct HillEstimate {
  double index = 0;
  std::size_t k = 0;
  bool no_power_tail = false;  // estimate far above any stable index: the samples look bounded
};

/// Hill estimator of the tail index of |samples| from the k largest order statistics.
inline HillEstimate hill_tail_index(const std::vector<double>& samples, std::size_t k = 0) {
  const std::size_t N = samples.size();
  if (k == 0) k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(N))));
  if (N < 4 || k < 2 || 2 * k >= N) throw ValidationError("Hill estimator needs 2 <= k < N/2 (N = " + std::to_string(N) +
                                                          ", k = " + std::to_string(k) + ")");
  std::vector<double> a(N);
  for (std::size_t i = 0; i < N; ++i) a[i] = std::abs(samples[i]);
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>());
  const double xk = a[k];
  if (!(xk > 0)) throw ValidationError("Hill estimator needs a positive (k+1)-th largest magnitude");
  double s = 0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(a[i] / xk);
  HillEstimate h;
  h.k = k;
  h.index = s > 0 ? static_cast<double>(k) / s : INFINITY;
  h.no_power_tail = !(h.index <= 4.0);
  return h;
}

struct VarianceCheck {
  double sample_variance = 0;
  double predicted = 0;
  double ratio = 0;
  double band = 0;  // 3 sqrt(2 / N)
  double tolerance = 0;
  std::size_t N = 0;
  bool pass = false;
};

/// Sample variance against a prediction: PASS when |ratio - 1| <= tolerance + 3 sqrt(2/N).
inline VarianceCheck variance_check(const std::vector<double>& samples, double predicted, double tolerance = 0.0) {
  require(samples.size() >= 2, "variance check needs at least two samples");
  VarianceCheck v;
  v.N = samples.size();
  v.predicted = predicted;
  v.tolerance = tolerance;
  const double N = static_cast<double>(v.N);
  const double mean = pairwise_sum(samples) / N;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sq[i] = (samples[i] - mean) * (samples[i] - mean);
  v.sample_variance = pairwise_sum(sq) / (N - 1);
  v.ratio = predicted > 0 ? v.sample_variance / predicted : INFINITY;
  v.band = 3 * std::sqrt(2.0 / N);
  v.pass = std::isfinite(v.ratio) && std::abs(v.ratio - 1) <= tolerance + v.band;
  return v;
}

}  // namespace coxballs
