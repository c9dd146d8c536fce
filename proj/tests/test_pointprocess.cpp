#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "coxballs/pointprocess.hpp"

using namespace coxballs;

namespace {

struct Moments {
  double n = 0, mean = 0, m2 = 0;
  void add(double x) {
    n += 1;
    double dl = x - mean;
    mean += dl / n;
    m2 += dl * (x - mean);
  }
  double var() const { return m2 / (n - 1); }
  double se() const { return std::sqrt(var() / n); }
};

ModelSpec local_model(int d, double beta, double v, KernelFamily k = KernelFamily::gaussian, double h = 1.0) {
  ModelSpec m;
  m.d = d;
  m.kernel = Kernel{k, h, d};
  m.radius = RadiusLaw{beta, 1.0};
  m.marks = MarkLaw::rademacher();
  m.scaling = ScalingLaw{Scenario::local, 0, v, 1, 1};
  return m;
}

// E[vol(S + B(0, rho R))] by the Steiner formula and closed-form radius moments
double mean_hitting_volume(const ModelSpec& m, double rho, const Box& S) {
  const double b = m.radius.beta, r0 = m.radius.r0;
  auto mom = [&](int k) { return k == 0 ? 1.0 : std::pow(rho * r0, k) * b / (b - k); };
  double e[3] = {0, 0, 0};
  for (int i = 0; i < S.dim; ++i) e[i] = S.hi[i] - S.lo[i];
  if (S.dim == 1) return e[0] + 2 * mom(1);
  return e[0] * e[1] + 2 * (e[0] + e[1]) * mom(1) + kPi * mom(2);
}

}  // namespace

TEST(SamplePoisson, MeanCountAndEmpty) {
  Box w{1, {0, 0, 0}, {2, 0, 0}};
  Moments c;
  for (int i = 0; i < 10000; ++i) {
    RandomStream rng(11, i);
    c.add(static_cast<double>(sample_poisson(w, 3.0, rng).size()));
  }
  EXPECT_NEAR(c.mean, 6.0, 3 * std::sqrt(6.0 / 10000));
  RandomStream rng(1, 1);
  EXPECT_TRUE(sample_poisson(w, 0.0, rng).empty());
}

TEST(SamplePoisson, CharacteristicFunctional) {
  // g = 1 on [0, 1), -0.5 on [1, 2]
  Box w{1, {0, 0, 0}, {2, 0, 0}};
  const int N = 10000;
  std::complex<double> ecf = 0;
  for (int i = 0; i < N; ++i) {
    RandomStream rng(12, i);
    double s = 0;
    for (const auto& p : sample_poisson(w, 3.0, rng)) s += p[0] < 1 ? 1.0 : -0.5;
    ecf += std::exp(std::complex<double>(0, s));
  }
  ecf /= static_cast<double>(N);
  const std::complex<double> I(0, 1);
  const auto want = std::exp(-3.0 * (1.0 - std::exp(I)) - 3.0 * (1.0 - std::exp(-0.5 * I)));
  EXPECT_LE(std::abs(ecf - want), 3 * std::sqrt(2.0 / N));
}

TEST(Model, Validation) {
  auto m = local_model(1, 1.5, 2);
  EXPECT_NO_THROW(m.validate());
  m.radius.beta = 2.5;
  EXPECT_THROW(m.validate(), ValidationError);
  auto g = local_model(1, 1.5, 2);
  g.scaling = ScalingLaw{Scenario::global, 1, 1, 0.0, 1};
  EXPECT_THROW(g.validate(), ValidationError);
  g.scaling = ScalingLaw{Scenario::local, 0.5, 1, 1, 1};
  EXPECT_THROW(g.validate(), ValidationError);
  RandomStream rng(0, 0);
  Box S{1, {0, 0, 0}, {1, 0, 0}};
  SamplerOptions o;
  o.windowed = true;
  EXPECT_THROW(sample_realization(m, 0.1, S, rng, o), ValidationError);
  EXPECT_THROW(sample_realization(local_model(1, 1.5, 2), 1.5, S, rng), ValidationError);
}

TEST(Sampler, HittingCountMatchesSteinerFormula) {
  struct Case {
    ModelSpec m;
    double rho;
    Box S;
  };
  std::vector<Case> cases{
      {local_model(1, 1.5, 1.0), 0.2, Box{1, {0, 0, 0}, {1, 0, 0}}},
      {local_model(1, 1.2, 1.0, KernelFamily::uniform_ball, 0.5), 0.3, Box{1, {-1, 0, 0}, {0.5, 0, 0}}},
      {local_model(2, 2.5, 1.0), 0.25, Box{2, {0, 0, 0}, {1, 0.5, 0}}},
  };
  cases[2].m.scaling = ScalingLaw{Scenario::global, 1.0, 0.5, 0.5, 2.0};
  for (const auto& c : cases) {
    const double want = c.m.scaling.kappa(c.rho) * c.m.scaling.lambda(c.rho) * mean_hitting_volume(c.m, c.rho, c.S);
    Moments hits;
    for (int i = 0; i < 4000; ++i) {
      RandomStream rng(21, i);
      hits.add(static_cast<double>(sample_realization(c.m, c.rho, c.S, rng).balls.size()));
    }
    EXPECT_NEAR(hits.mean, want, 4 * hits.se()) << c.m.d;
  }
}

TEST(Sampler, AgreesWithDirectSamplerOnSmallBalls) {
  // balls with r <= 1 come from centers within 1 + h of the target, so the
  // direct sampler with that reach sees the same law for them
  auto m = local_model(1, 1.5, 1.0, KernelFamily::uniform_ball, 0.7);
  const double rho = 0.2;
  Box S{1, {0, 0, 0}, {1, 0, 0}};
  auto mu = TestMeasure::interval(0, 1);
  Moments a_cnt, b_cnt, a_fld, b_fld;
  for (int i = 0; i < 6000; ++i) {
    RandomStream r1(31, i), r2(32, i);
    auto A = sample_realization(m, rho, S, r1);
    auto B = sample_realization_direct(m, rho, S, 1.0 + 0.7 + 1e-9, r2);
    double ca = 0, cb = 0, fa = 0, fb = 0;
    for (const auto& b : A.balls)
      if (b.r <= 1) {
        ++ca;
        fa += b.m * mu.ball_mass(b.x, b.r);
      }
    for (const auto& b : B.balls)
      if (b.r <= 1) {
        ++cb;
        fb += b.m * mu.ball_mass(b.x, b.r);
      }
    a_cnt.add(ca);
    b_cnt.add(cb);
    a_fld.add(fa * fa);
    b_fld.add(fb * fb);
  }
  EXPECT_NEAR(a_cnt.mean, b_cnt.mean, 4 * std::hypot(a_cnt.se(), b_cnt.se()));
  EXPECT_NEAR(a_fld.mean, b_fld.mean, 4 * std::hypot(a_fld.se(), b_fld.se()));
}

TEST(Sampler, ClusterSizesArePoisson) {
  auto m = local_model(1, 1.5, 1.0);
  const double rho = 0.1;  // lambda = 10
  Box S{1, {0, 0, 0}, {1, 0, 0}};
  Moments sz;
  for (int i = 0; i < 300; ++i) {
    RandomStream rng(41, i);
    for (const auto& c : sample_realization(m, rho, S, rng).centers)
      if (c.enumerated) sz.add(static_cast<double>(c.total_balls));
  }
  EXPECT_NEAR(sz.mean, 10.0, 3 * sz.se());
  const double disp = sz.var() / sz.mean;
  EXPECT_NEAR(disp, 1.0, 3 * std::sqrt(2.0 / (sz.n - 1)));
}

TEST(Sampler, WindowedTotalsMatchCompoundPoissonMean) {
  auto m = local_model(2, 2.5, 0.5);
  m.scaling = ScalingLaw{Scenario::global, 1.0, 0.5, 1.0, 1.0};
  m.marks = MarkLaw::dirac(1.0);
  const double rho = 0.2;
  Box S{2, {0, 0, 0}, {1, 1, 0}};
  SamplerOptions o;
  o.windowed = true;
  o.r_max = 2.0;
  Moments tot;
  double vol = 0;
  for (int i = 0; i < 1000; ++i) {
    RandomStream rng(51, i);
    auto R = sample_realization(m, rho, S, rng, o);
    vol = R.enumerated_volume;
    tot.add(static_cast<double>(R.enumerated_total));
    for (const auto& b : R.balls) ASSERT_LE(b.r, 2.0);
  }
  EXPECT_NEAR(tot.mean, m.scaling.kappa(rho) * m.scaling.lambda(rho) * vol, 3 * tot.se());
  EXPECT_NEAR(vol, inflated_box_volume(S, 2.0 + m.kernel.reach()), 1e-12);
}

TEST(Sampler, DiscardedBallsMissTheTarget) {
  auto m = local_model(2, 2.5, 1.0);
  Box S{2, {0, 0, 0}, {1, 1, 0}};
  auto mu = TestMeasure::box(2, S.lo, S.hi);
  SamplerOptions o;
  o.keep_discarded = true;
  std::uint64_t seen = 0;
  for (int i = 0; i < 50; ++i) {
    RandomStream rng(61, i);
    auto R = sample_realization(m, 0.3, S, rng, o);
    ASSERT_EQ(R.discarded.size(), R.discarded_count);
    for (const auto& b : R.discarded) EXPECT_EQ(mu.ball_mass(b.x, b.r), 0.0);
    for (const auto& b : R.balls) {
      EXPECT_LT(b.cluster, R.centers.size());
      EXPECT_GE(b.r, 0.3);
    }
    seen += R.discarded_count;
  }
  EXPECT_GT(seen, 0u);
}

TEST(Sampler, ReproducibleFromSeed) {
  auto m = local_model(1, 1.5, 2.0);
  Box S{1, {0, 0, 0}, {1, 0, 0}};
  RandomStream a(77, 5), b(77, 5), c(77, 6);
  auto A = sample_realization(m, 0.1, S, a), B = sample_realization(m, 0.1, S, b),
       C = sample_realization(m, 0.1, S, c);
  ASSERT_EQ(A.balls.size(), B.balls.size());
  for (std::size_t i = 0; i < A.balls.size(); ++i) {
    EXPECT_EQ(A.balls[i].x, B.balls[i].x);
    EXPECT_EQ(A.balls[i].r, B.balls[i].r);
    EXPECT_EQ(A.balls[i].m, B.balls[i].m);
  }
  EXPECT_NE(A.balls.size() + A.discarded_count, C.balls.size() + C.discarded_count);
}

TEST(Bounds, TruncationBias) {
  auto m = local_model(1, 1.5, 2.0);
  auto mu = TestMeasure::interval(0, 1);
  const double rho = 0.1;
  EXPECT_EQ(truncation_bias_bound(m, rho, mu, INFINITY), 0.0);
  const double R = 5.0;
  const double tail = 3 * std::pow(R / rho, -0.5);
  const double want = m.scaling.kappa(rho) * m.scaling.lambda(rho) * 2.0 * 1.0 * 1.0 * rho * tail;
  EXPECT_NEAR(truncation_bias_bound(m, rho, mu, R), want, 1e-12 * want);
  EXPECT_NEAR(truncation_bias_bound(m, rho, mu, R) / truncation_bias_bound(m, rho, mu, 2 * R), std::pow(2.0, 0.5),
              1e-12);
  const double Ra = auto_truncation_radius(m, rho, mu, 1e-3);
  EXPECT_NEAR(truncation_bias_bound(m, rho, mu, Ra), 1e-3, 1e-12);
}

TEST(LargeBalls, ClosedFormExample) {
  auto m = local_model(1, 1.5, 2.0);
  EXPECT_NEAR(expected_large_balls(m, 0.1), 6 * 100 * std::pow(0.1, 1.5), 1e-10);
  // rho r0 > 1: every ball is large, mean kappa lambda v_d E[(rho R)^d]
  auto big = m;
  big.radius.r0 = 20;
  const double rho = 0.1;
  EXPECT_NEAR(expected_large_balls(big, rho), 100 * 2 * rho * 20 * 1.5 / 0.5, 1e-9);
}

TEST(LargeBalls, EmpiricalMean) {
  auto m = local_model(1, 1.5, 2.0);
  const double rho = 0.1, want = expected_large_balls(m, rho);
  Box S{1, {-0.01, 0, 0}, {0.01, 0, 0}};
  double total = 0;
  const int N = 2000;
  for (int i = 0; i < N; ++i) {
    RandomStream rng(71, i);
    total += static_cast<double>(count_large_balls(sample_realization(m, rho, S, rng)));
  }
  // counts are overdispersed relative to Poisson (cluster effect); check against 3 sqrt(E/N) as stated
  EXPECT_NEAR(total / N, want, 3 * std::sqrt(want / N));
  Realization r;
  r.target = Box{1, {1, 0, 0}, {2, 0, 0}};
  EXPECT_THROW(count_large_balls(r), ValidationError);
}
