#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "coxballs/limits.hpp"

using namespace coxballs;

namespace {

ModelSpec make_model(int d, double beta, Scenario sc, double u, double v, MarkLaw marks = MarkLaw::rademacher(),
                     KernelFamily kf = KernelFamily::gaussian) {
  ModelSpec m;
  m.d = d;
  m.kernel = Kernel{kf, 1.0, d};
  m.radius = RadiusLaw{beta, 1.0};
  m.marks = marks;
  m.scaling = ScalingLaw{sc, u, v, 1, 1};
  return m;
}

// int_0^inf (1 - cos r) r^{-1-g} dr = -Gamma(-g) cos(pi g / 2), 1 < g < 2
double one_minus_cos_closed(double g) { return -std::tgamma(-g) * std::cos(kPi * g / 2); }

double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// 1-D oracle: exp(int (e^{e (Phi(1-y) - Phi(-y))} - 1) dy), Gaussian kernel, unit bandwidth
cplx smallballs_cf_1d(cplx e) {
  const double a = -12, b = 13;
  const int n = 200000;
  const double dy = (b - a) / n;
  cplx s = 0;
  for (int i = 0; i <= n; ++i) {
    const double y = a + i * dy;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    s += w * (std::exp(e * (Phi(1 - y) - Phi(-y))) - 1.0);
  }
  return std::exp(s * dy);
}

// mu(B(x, r)) for mu = 1_[0, 1]
double unit_interval_mass(double x, double r) { return std::max(0.0, std::min(1.0, x + r) - std::max(0.0, x - r)); }

}  // namespace

TEST(GammaConstants, ClosedFormAndSkewness) {
  auto rad = gamma_constants(MarkLaw::rademacher(), 1.5, 1);
  EXPECT_NEAR(rad.I, one_minus_cos_closed(1.5), 1e-9);
  EXPECT_EQ(rad.b_gamma, 0.0);
  EXPECT_NEAR(rad.sigma_gamma, std::pow(2.0, 1.5) * one_minus_cos_closed(1.5), 1e-8);

  auto dir = gamma_constants(MarkLaw::dirac(1.0), 1.5, 1);
  EXPECT_EQ(dir.b_gamma, -1.0);
  auto neg = gamma_constants(MarkLaw::dirac(-2.0), 1.5, 1);
  EXPECT_EQ(neg.b_gamma, 1.0);

  // one-sided Pareto to the right is fully skewed like a positive Dirac
  auto par = gamma_constants(MarkLaw::two_sided_pareto(1.8, 1.0, 1.0), 1.5, 1);
  EXPECT_NEAR(par.b_gamma, -1.0, 1e-12);

  // d = 2: gamma = beta / 2, v_2 = pi
  auto d2 = gamma_constants(MarkLaw::rademacher(), 3.0, 2);
  EXPECT_NEAR(d2.sigma_gamma, std::pow(kPi, 1.5) / 2 * one_minus_cos_closed(1.5), 1e-8);
}

TEST(GammaConstants, ToleranceHalvingAndHomogeneity) {
  for (double beta : {1.2, 1.5, 1.9}) {
    QuadOptions o{1e-8, 1e-12};
    auto a = gamma_constants(MarkLaw::rademacher(), beta, 1, o);
    auto b = gamma_constants(MarkLaw::rademacher(), beta, 1, o.tightened(0.5));
    EXPECT_NEAR(a.sigma_gamma / b.sigma_gamma, 1.0, 5e-5) << beta;
    for (double c : {0.5, 3.0}) {
      for (const MarkLaw& g : {MarkLaw::rademacher(), MarkLaw::gaussian(1.3), MarkLaw::two_sided_pareto(1.95, 1.0, 0.3)}) {
        auto s1 = gamma_constants(g, beta, 1).sigma_gamma;
        auto sc = gamma_constants(g.scaled(c), beta, 1).sigma_gamma;
        EXPECT_NEAR(sc / (std::pow(c, beta) * s1), 1.0, 1e-6);
      }
    }
  }
}

TEST(GammaConstants, RangeChecks) {
  EXPECT_THROW(gamma_constants(MarkLaw::rademacher(), 0.9, 1), ValidationError);
  EXPECT_THROW(gamma_constants(MarkLaw::rademacher(), 2.5, 1), ValidationError);
  EXPECT_THROW(gamma_constants(MarkLaw::exact_stable({1.4, 1, 0}), 1.5, 1), ValidationError);
}

TEST(GammaConstants, MellinTransformAgreesWithMoments) {
  const double g = 1.5;
  for (const MarkLaw& m : {MarkLaw::rademacher(), MarkLaw::dirac(1.0), MarkLaw::gaussian(0.7)}) {
    const double I = one_minus_cos_closed(g);
    const double M = m.abs_moment(g), S = m.signed_moment(g);
    for (int sgn : {1, -1}) {
      const cplx expect = -I * cplx(M, -sgn * std::tan(kPi * g / 2) * S);
      auto q = psi_G_mellin(m, g, sgn);
      EXPECT_LT(std::abs(q.value - expect), 1e-5 * std::abs(expect) + 2 * q.error_estimate)
          << m.description() << " " << sgn << " " << q.value << " vs " << expect;
    }
  }
}

TEST(LimitCF, BasicProperties) {
  auto mu = TestMeasure::sum({{1.0, TestMeasure::interval(0, 1)}, {-0.5, TestMeasure::interval(0.5, 2)}});
  std::vector<ModelSpec> models = {make_model(1, 1.5, Scenario::local, 0, 2, MarkLaw::exact_stable({1.8, 1, 0.5})),
                                   make_model(1, 1.5, Scenario::local, 0, 1.5, MarkLaw::dirac(1.0)),
                                   make_model(1, 1.5, Scenario::local, 0, 1.0, MarkLaw::dirac(1.0)),
                                   make_model(1, 1.5, Scenario::global, 1, 1, MarkLaw::exact_stable({1.8, 1, 0.5})),
                                   make_model(1, 1.5, Scenario::global, 1.5, 0, MarkLaw::dirac(1.0)),
                                   make_model(1, 1.5, Scenario::global, 0.5, 0, MarkLaw::dirac(1.0))};
  for (const auto& m : models) {
    auto reg = classify_regime(m);
    EXPECT_EQ(limit_cf(reg, m, mu, 0.0).value, cplx(1.0));
    for (double th : {0.3, 1.7}) {
      auto p = limit_cf(reg, m, mu, th), q = limit_cf(reg, m, mu, -th);
      EXPECT_LE(std::abs(p.value), 1.0 + 1e-12) << to_string(reg.kind);
      EXPECT_NEAR(std::abs(p.value - std::conj(q.value)), 0.0, 1e-7) << to_string(reg.kind);
      EXPECT_GT(std::abs(p.value.imag()), 1e-6 * std::abs(p.value)) << "skewed limits are not real: " << to_string(reg.kind) << p.value;
    }
  }
}

TEST(LimitCF, RegimeMismatchRejected) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  Regime wrong = classify_regime(make_model(1, 1.5, Scenario::global, 1, 1));
  EXPECT_THROW(limit_cf(wrong, m, TestMeasure::interval(0, 1), 1.0), ValidationError);
}

TEST(LimitCF, GlobalStableGaussianMatchesVarianceIntegral) {
  // alpha = 2, Rademacher: log CF = -theta^2 A / 2 with A = C_beta int int mu(B)^2 r^{-beta-1}
  auto m = make_model(1, 1.5, Scenario::global, 1, 1);
  auto mu = TestMeasure::interval(0, 1);
  const double b = 1.5, h = 0.5;
  const double A = b * (4 * std::pow(h, 0.5) / 0.5 - (8.0 / 3) * std::pow(h, 1.5) / 1.5) +
                   b * (2 * std::pow(h, -0.5) / 0.5 - (1.0 / 3) * std::pow(h, -1.5) / 1.5);
  auto reg = classify_regime(m);
  for (double th : {0.1, 0.5, 1.0, 2.0}) {
    auto v = limit_cf(reg, m, mu, th);
    EXPECT_NEAR(std::log(v.value.real()) / (th * th), -A / 2, 1e-6 * A);
    EXPECT_NEAR(v.value.imag(), 0.0, 1e-14);
  }
  auto p = stable_limit_params(mu, m.marks, m.radius, reg);
  EXPECT_DOUBLE_EQ(p.alpha, 2.0);
  EXPECT_NEAR(2 * p.sigma * p.sigma, A, 1e-6 * A);
  EXPECT_THROW(stable_limit_params(mu, m.marks, m.radius, classify_regime(make_model(1, 1.5, Scenario::local, 0, 2))),
               ValidationError);
}

TEST(LimitCF, GlobalGammaClosedForm) {
  auto m = make_model(1, 1.5, Scenario::global, 0.5, 0);
  auto reg = classify_regime(m);
  ASSERT_EQ(reg.kind, RegimeKind::global_gamma);
  auto mu = TestMeasure::sum({{1.0, TestMeasure::interval(0, 1)}, {-3.0, TestMeasure::interval(0.5, 0.75)}});
  const double sig = 1.5 * std::pow(2.0, 1.5) * one_minus_cos_closed(1.5);
  for (double th : {0.4, -1.1}) {
    // density 1 on 0.75 length, -2 on 0.25 length; Rademacher has no skew
    const double e = -sig * (0.75 * std::pow(std::abs(th), 1.5) + 0.25 * std::pow(std::abs(2 * th), 1.5));
    EXPECT_NEAR(std::abs(limit_cf(reg, m, mu, th).value - std::exp(e)), 0.0, 1e-9);
  }
}

TEST(LimitCF, GlobalPoissonMatchesDoubleIntegral) {
  auto m = make_model(1, 1.5, Scenario::global, 1.5, 0);
  auto reg = classify_regime(m);
  ASSERT_EQ(reg.kind, RegimeKind::global_poisson);
  auto mu = TestMeasure::interval(0, 1);
  const double th = 1.3;
  // C_beta int_0^inf r^{-2.5} int (cos(theta mu(B(x, r))) - 1) dx dr, the x-integral over [-r, 1 + r]
  auto inner = [&](double r) {
    auto f = [&](double x) { return std::cos(th * unit_interval_mass(x, r)) - 1.0; };
    std::vector<double> br{0.0, 1.0, r, 1 - r};
    return integrate<double>(f, -r, 1 + r, {1e-12, 1e-15, 4000, false}, br).value * 1.5 * std::pow(r, -2.5);
  };
  const QuadOptions o{1e-10, 1e-14, 4000, false};
  // the r-integrand behaves like r^{-1/2} at 0
  const double e = integrate_left_singular<double>(inner, 0.0, 0.5, -0.5, o).value +
                   integrate<double>(inner, 0.5, 1.0, o).value + integrate_half_line<double>(inner, 1.0, 1.5, 1.0, o).value;
  auto v = limit_cf(reg, m, mu, th);
  EXPECT_NEAR(v.value.real(), std::exp(e), 1e-6);
  EXPECT_NEAR(v.value.imag(), 0.0, 1e-12);
}

TEST(LimitCF, LocalSmallBallsMatchesDirectOuterIntegral) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 1.0, MarkLaw::dirac(1.0));
  auto reg = classify_regime(m);
  ASSERT_EQ(reg.kind, RegimeKind::local_smallballs);
  auto mu = TestMeasure::interval(0, 1);
  const auto gc = gamma_constants(m.marks, m.radius, 1);
  for (double th : {0.5, -1.5}) {
    auto v = limit_cf(reg, m, mu, th);
    EXPECT_NEAR(std::abs(v.value - smallballs_cf_1d(gc.exponent(th))), 0.0, 1e-7) << th;
  }
}

TEST(LimitCF, LocalKindsReduceToGlobalExponentForSmallTheta) {
  // log CF = int ell + O(ell^2), and int ell is the exponent of the global kind
  auto mu = TestMeasure::interval(0, 1);
  auto ls = make_model(1, 1.5, Scenario::local, 0, 2, MarkLaw::exact_stable({1.8, 1, 0.4}));
  auto gs = make_model(1, 1.5, Scenario::global, 1, 1, MarkLaw::exact_stable({1.8, 1, 0.4}));
  auto lb = make_model(2, 3.0, Scenario::local, 0, 1.0, MarkLaw::dirac(1.0));
  auto gb = make_model(2, 3.0, Scenario::global, 0.5, 0, MarkLaw::dirac(1.0));
  auto box = TestMeasure::box(2, {0, 0, 0}, {1, 0.5, 0});
  struct Pair {
    ModelSpec local, global;
    TestMeasure mu;
  };
  for (const auto& p : {Pair{ls, gs, mu}, Pair{lb, gb, box}}) {
    const double th = 0.01;
    const cplx a = std::log(limit_cf(classify_regime(p.local), p.local, p.mu, th).value);
    const cplx b = std::log(limit_cf(classify_regime(p.global), p.global, p.mu, th).value);
    EXPECT_LT(std::abs(a / b - 1.0), 2e-3) << a << " vs " << b;
  }
}

TEST(LimitCF, LocalSmallBallsTwoDimensionalBox) {
  // product kernel: Q(y) = e * prod (Phi(hi - y_i) - Phi(lo - y_i)); direct 2-D trapezoid
  auto m = make_model(2, 3.0, Scenario::local, 0, 1.0);
  auto reg = classify_regime(m);
  auto mu = TestMeasure::box(2, {0, 0, 0}, {1, 0.5, 0});
  const auto gc = gamma_constants(m.marks, m.radius, 2);
  const double th = 0.3;
  const cplx e = gc.exponent(th);
  const double a = -9, b = 10, dy = 0.02;
  const int n = static_cast<int>((b - a) / dy);
  cplx s = 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double y1 = a + i * dy, y2 = a + j * dy;
      const double w = ((i == 0 || i == n) ? 0.5 : 1.0) * ((j == 0 || j == n) ? 0.5 : 1.0);
      const double q = (Phi(1 - y1) - Phi(-y1)) * (Phi(0.5 - y2) - Phi(-y2));
      s += w * (std::exp(e * q) - 1.0);
    }
  const cplx expect = std::exp(s * dy * dy);
  auto v = limit_cf(reg, m, mu, th);
  EXPECT_NEAR(std::abs(v.value - expect), 0.0, 2e-4) << v.value << " vs " << expect;
}

TEST(ExactCF, BasicPropertiesAndErrors) {
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  auto mu = TestMeasure::interval(0, 1);
  EXPECT_EQ(exact_cf(m, mu, 0.2, 0.0).value, cplx(1.0));
  auto p = exact_cf(m, mu, 0.2, 0.7), q = exact_cf(m, mu, 0.2, -0.7);
  EXPECT_NEAR(std::abs(p.value - std::conj(q.value)), 0.0, 1e-9);
  EXPECT_LE(std::abs(p.value), 1.0);
  EXPECT_THROW(exact_cf(m, mu, 1.5, 1.0), ValidationError);
  auto m3 = make_model(3, 4.0, Scenario::local, 0, 2);
  EXPECT_THROW(exact_cf(m3, TestMeasure::box(3, {0, 0, 0}, {1, 1, 1}), 0.2, 1.0), CapabilityError);
}

TEST(ExactCF, SmallThetaMatchesConditionalVariance) {
  // -2 log CF / theta^2 -> lambda / n^2 int int mu(B(x, r))^2 f_rho(r) dr dx
  auto m = make_model(1, 1.5, Scenario::local, 0, 2);
  auto mu = TestMeasure::interval(0, 1);
  const double rho = 0.2, b = 1.5;
  const double n = classify_regime(m).n(rho);
  auto prof = [](double r) { return r <= 0.5 ? 4 * r * r - 8 * r * r * r / 3 : 2 * r - 1.0 / 3; };
  auto f = [&](double r) { return prof(r) * b * std::pow(rho, b) * std::pow(r, -b - 1); };
  const double I = integrate<double>(f, rho, 0.5, {1e-12, 1e-15}).value +
                   integrate_half_line<double>(f, 0.5, 1.5, 1.0, {1e-12, 1e-15}).value;
  const double var = m.scaling.lambda(rho) / (n * n) * I;
  const double th = 1e-3;
  auto v = exact_cf(m, mu, rho, th);
  EXPECT_NEAR(-2 * std::log(v.value.real()) / (th * th), var, 1e-4 * var);
}

TEST(ExactCF, AgreesWithSimulationInOneAndTwoDimensions) {
  struct Case {
    ModelSpec m;
    TestMeasure mu;
    double rho;
  };
  std::vector<Case> cases = {
      {make_model(1, 1.5, Scenario::local, 0, 2), TestMeasure::interval(0, 1), 0.2},
      {make_model(1, 1.5, Scenario::local, 0, 1.8, MarkLaw::two_sided_pareto(1.7, 1.0, 0.5), KernelFamily::uniform_ball),
       TestMeasure::sum({{1.0, TestMeasure::interval(0, 1)}, {-1.0, TestMeasure::interval(1.5, 2)}}), 0.25},
      {make_model(2, 3.0, Scenario::local, 0, 3.5), TestMeasure::box(2, {0, 0, 0}, {1, 1, 0}), 0.3},
  };
  const int N = 4000;
  for (const auto& c : cases) {
    FieldOptions fo;
    fo.threads = 4;
    auto run = sample_fluctuations(c.m, c.mu, c.rho, N, 11, fo);
    for (double th : {0.3, 1.0}) {
      cplx e = 0;
      for (const auto& s : run.samples) e += std::exp(cplx(0, th * s.normalized));
      e /= static_cast<double>(N);
      auto v = exact_cf(c.m, c.mu, c.rho, th);
      EXPECT_LT(std::abs(e - v.value), 4 * std::sqrt(2.0 / N) + v.error_estimate)
          << "d=" << c.m.d << " theta=" << th << " ecf=" << e << " exact=" << v.value;
    }
  }
}
