#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace coxballs {

inline constexpr int kMaxDim = 3;
inline constexpr double kPi = std::numbers::pi;

/// Points live in R^3; only the first `dim` coordinates are meaningful.
using Point = std::array<double, kMaxDim>;

/// Bad configuration or parameters outside the admissible set (exit code 2).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested (form, dimension) or evaluator combination is not implemented.
class CapabilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Numerical failure carrying the best value reached.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double best, double achieved)
      : std::runtime_error(what + " (best estimate " + std::to_string(best) +
                           ", achieved error " + std::to_string(achieved) + ")"),
        best_estimate(best),
        achieved_error(achieved) {}
  double best_estimate;
  double achieved_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

inline void check_dimension(int d) {
  if (d < 1 || d > kMaxDim)
    throw CapabilityError("dimension must be 1, 2 or 3 (got " + std::to_string(d) + ")");
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return kPi;
    case 3: return 4.0 * kPi / 3.0;
  }
  check_dimension(d);
  return 0.0;
}

/// Surface area of the unit sphere S^{d-1}.
inline double unit_sphere_area(int d) { return d * unit_ball_volume(d); }

/// Pairwise (cascade) summation: the result depends only on the order of `v`.
template <class T>
T pairwise_sum(const T* v, std::size_t n) {
  if (n <= 16) {
    T s{};
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}
template <class T>
T pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(v.data(), v.size());
}

inline double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

inline double norm(const Point& p, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

inline Point sub(const Point& a, const Point& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Point add(const Point& a, const Point& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Point scale(const Point& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline double distance(const Point& a, const Point& b, int d) { return norm(sub(a, b), d); }

/// Axis-aligned box [lo, hi] in the first `dim` coordinates.
struct Box {
  int dim = 1;
  Point lo{0, 0, 0};
  Point hi{0, 0, 0};

  Point center() const {
    Point c{0, 0, 0};
    for (int i = 0; i < dim; ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
  }
  double half_diagonal() const {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
    return 0.5 * std::sqrt(s);
  }
  double volume() const {
    double v = 1;
    for (int i = 0; i < dim; ++i) v *= hi[i] - lo[i];
    return v;
  }
  bool contains(const Point& p) const {
    for (int i = 0; i < dim; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
  /// Euclidean distance from p to the box (0 inside).
  double distance_to(const Point& p) const {
    double s = 0;
    for (int i = 0; i < dim; ++i) {
      double e = std::max({lo[i] - p[i], 0.0, p[i] - hi[i]});
      s += e * e;
    }
    return std::sqrt(s);
  }
  /// Largest distance from p to a point of the box.
  double farthest_distance(const Point& p) const {
    double s = 0;
    for (int i = 0; i < dim; ++i) {
      double e = std::max(std::abs(p[i] - lo[i]), std::abs(p[i] - hi[i]));
      s += e * e;
    }
    return std::sqrt(s);
  }
  Box inflated(double r) const {
    Box b = *this;
    for (int i = 0; i < dim; ++i) {
      b.lo[i] -= r;
      b.hi[i] += r;
    }
    return b;
  }
  Box merged(const Box& o) const {
    Box b = *this;
    for (int i = 0; i < dim; ++i) {
      b.lo[i] = std::min(lo[i], o.lo[i]);
      b.hi[i] = std::max(hi[i], o.hi[i]);
    }
    return b;
  }
};

}  // namespace coxballs
