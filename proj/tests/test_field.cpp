#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "coxballs/field.hpp"

using namespace coxballs;

namespace {

ModelSpec make_model(int d, double beta, Scenario sc, double u, double v, MarkLaw marks = MarkLaw::rademacher()) {
  ModelSpec m;
  m.d = d;
  m.kernel = Kernel{KernelFamily::gaussian, 1.0, d};
  m.radius = RadiusLaw{beta, 1.0};
  m.marks = marks;
  m.scaling = ScalingLaw{sc, u, v, 1, 1};
  return m;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}
double se_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST(Classify, SpecExamples) {
  auto a = classify_regime(make_model(1, 1.5, Scenario::local, 0, 2, MarkLaw::exact_stable({1.8, 1, 0})));
  EXPECT_EQ(a.kind, RegimeKind::local_stable);
  EXPECT_NEAR(a.n(0.1), std::pow(0.1, -0.5 / 1.8), 1e-14);
  auto b = classify_regime(make_model(1, 1.5, Scenario::global, 1.5, 0));
  EXPECT_EQ(b.kind, RegimeKind::global_poisson);
  EXPECT_EQ(b.a, 1.0);
  EXPECT_EQ(b.n(0.3), 1.0);
  EXPECT_NE(b.summary().find("global-poisson, a=1, n(rho)=1"), std::string::npos);
  auto c = classify_regime(make_model(1, 1.5, Scenario::global, 1, 0, MarkLaw::exact_stable({1.8, 1, 0})));
  EXPECT_EQ(c.kind, RegimeKind::global_gamma);
  EXPECT_DOUBLE_EQ(c.gamma, 1.5);
  EXPECT_NEAR(c.n(0.2), std::pow(std::pow(0.2, 0.5), 1 / 1.5), 1e-14);
  EXPECT_EQ(classify_regime(make_model(1, 1.5, Scenario::local, 0, 1.5)).kind, RegimeKind::local_intermediate);
  EXPECT_EQ(classify_regime(make_model(1, 1.5, Scenario::local, 0, 1.0)).kind, RegimeKind::local_smallballs);
  EXPECT_EQ(classify_regime(make_model(1, 1.5, Scenario::global, 1, 1)).kind, RegimeKind::global_stable);
}

TEST(Classify, GammaNeedsDivergingBallCount) {
  auto m = make_model(1, 1.5, Scenario::global, 0.5, -0.6);
  try {
    classify_regime(m);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("u + v > 0"), std::string::npos);
  }
}

TEST(Classify, PartitionProperty) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (int i = 0; i < 2000; ++i) {
    const int d = 1 + static_cast<int>(U(g) * 3);
    const double alpha = 1.1 + 0.9 * U(g);
    const double beta = d * (1 + (alpha - 1) * (0.05 + 0.9 * U(g)));
    const bool local = U(g) < 0.5;
    const double u = local ? 0 : 0.1 + 3 * U(g);
    double v = 3 * U(g) - (local ? 0 : 1);
    if (local) v = std::max(v, 0.05);
    if (U(g) < 0.1) v = local ? beta : beta - u;  // hit the boundary
    auto m = make_model(d, beta, local ? Scenario::local : Scenario::global, u, v,
                        MarkLaw::exact_stable({alpha, 1, 0}));
    const double e = local ? v - beta : u + v - beta;
    if (!local && e < 0 && u + v <= 0) {
      EXPECT_THROW(classify_regime(m), ValidationError);
      continue;
    }
    auto r = classify_regime(m);
    EXPECT_EQ(r.is_local(), local);
    if (exponents_equal(local ? v : u + v, beta))
      EXPECT_TRUE(r.is_intermediate());
    else if (e > 0)
      EXPECT_TRUE(r.kind == RegimeKind::local_stable || r.kind == RegimeKind::global_stable);
    else
      EXPECT_TRUE(r.is_small_balls());
  }
}

TEST(Field, EmptySingleAndLinear) {
  Realization r;
  auto mu = TestMeasure::interval(0, 1);
  EXPECT_EQ(evaluate_field(r, mu), 0.0);
  r.balls.push_back({0, {0.5, 0, 0}, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(evaluate_field(r, mu), 2.0);
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  auto nu = TestMeasure::interval(0.3, 2.0);
  auto combo = TestMeasure::sum({{1.5, mu}, {-0.25, nu}});
  Box S = combo.support_box();
  RandomStream rng(5, 5);
  auto real = sample_realization(m, 0.1, S, rng);
  ASSERT_GT(real.balls.size(), 10u);
  EXPECT_NEAR(evaluate_field(real, combo), 1.5 * evaluate_field(real, mu) - 0.25 * evaluate_field(real, nu), 1e-10);
}

TEST(ConditionalMean, CenteredMarksAndNoCenters) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  std::vector<CenterRecord> cs{{{0.3, 0, 0}, 5, true}};
  EXPECT_EQ(conditional_mean(cs, m, 0.1, nullptr), 0.0);
  auto md = make_model(1, 1.5, Scenario::local, 0, 2, MarkLaw::dirac(1.0));
  EXPECT_EQ(conditional_mean({}, md, 0.1, nullptr), 0.0);
}

TEST(ConditionalMean, TableMatchesDirectQuadrature) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 2, MarkLaw::dirac(1.0));
  auto mu = TestMeasure::interval(0, 1);
  const double rho = 0.2, rmax = 3.0;
  ConditionalMeanTable t(m, rho, mu, rmax, rmax + m.kernel.reach());
  EXPECT_LT(t.error_bound(), 1e-6);
  for (double y : {-3.0, 0.1, 0.5, 2.7}) {
    const double direct = ConditionalMeanTable::direct_value(m, rho, mu, {y, 0, 0}, rmax);
    EXPECT_NEAR(t({y, 0, 0}), direct, 1e-6) << y;
  }
}

TEST(ConditionalMean, DiracClusterMonteCarlo) {
  // one fixed center: mean of the cluster's field over resampled clusters
  auto m = make_model(1, 1.5, Scenario::local, 0, 1.0, MarkLaw::dirac(1.0));
  auto mu = TestMeasure::interval(0, 1);
  const double rho = 0.2, rmax = 4.0;
  const Point y{0.8, 0, 0};
  ConditionalMeanTable t(m, rho, mu, rmax, rmax + m.kernel.reach());
  const double predicted = conditional_mean({{y, 0, true}}, m, rho, &t);
  std::vector<double> vals;
  const double lambda = m.scaling.lambda(rho);
  for (int i = 0; i < 10000; ++i) {
    RandomStream rng(81, i);
    const auto n = rng.poisson(lambda);
    double s = 0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const Point x = add(y, m.kernel.sample_offset(rng));
      const double r = sample_radius(m.radius, rho, rng);
      if (r <= rmax) s += mu.ball_mass(x, r);
    }
    vals.push_back(s);
  }
  EXPECT_NEAR(mean_of(vals), predicted, 3 * se_of(vals));
}

TEST(Fluctuations, CenteredMeanZeroAndIdentity) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  auto mu = TestMeasure::interval(0, 1);
  auto run = sample_fluctuations(m, mu, 0.2, 2000, 99);
  ASSERT_EQ(run.samples.size(), 2000u);
  std::vector<double> z;
  for (const auto& s : run.samples) {
    EXPECT_EQ(s.centering, 0.0);
    EXPECT_NEAR(s.normalized * run.n + s.centering, s.value, 1e-12 * std::max(1.0, std::abs(s.value)));
    z.push_back(s.normalized);
  }
  EXPECT_NEAR(mean_of(z), 0.0, 3 * se_of(z));
  EXPECT_TRUE(sample_fluctuations(m, mu, 0.2, 0, 99).samples.empty());
}

TEST(Fluctuations, DeterministicAcrossThreadCounts) {
  auto m = make_model(1, 1.5, Scenario::global, 1, 1);
  auto mu = TestMeasure::interval(0, 1);
  FieldOptions one, many;
  many.threads = 4;
  auto a = sample_fluctuations(m, mu, 0.1, 64, 7, one);
  auto b = sample_fluctuations(m, mu, 0.1, 64, 7, many);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(a.samples[i].value, b.samples[i].value);
    EXPECT_EQ(a.samples[i].normalized, b.samples[i].normalized);
  }
}

TEST(Fluctuations, NonCenteredMarksAreCentered) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 1.0, MarkLaw::dirac(1.0));
  auto mu = TestMeasure::interval(0, 1);
  auto run = sample_fluctuations(m, mu, 0.2, 3000, 5, FieldOptions{4.0, false, 1e-3, 1e-6, 4});
  EXPECT_TRUE(run.windowed);
  std::vector<double> z;
  for (const auto& s : run.samples) z.push_back(s.normalized);
  EXPECT_NEAR(mean_of(z), 0.0, 3 * se_of(z) + run.centering_error * 10);
  EXPECT_GT(run.truncation_bias, 0.0);
}
