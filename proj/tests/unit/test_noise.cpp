#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <string>

#include "lagranflow/noise.hpp"

using namespace lagranflow;

TEST(TimeBasis, ValuesAndOrthonormality) {
  EXPECT_EQ(time_basis(1, 0.37), 1.0);
  EXPECT_THROW(time_basis(0, 0.1), std::invalid_argument);
  const int q = 4000;
  double g23 = 0, g44 = 0;
  for (int k = 0; k < q; ++k) {
    const double t = (k + 0.5) / q;
    g23 += time_basis(2, t) * time_basis(3, t) / q;
    g44 += time_basis(4, t) * time_basis(4, t) / q;
  }
  EXPECT_NEAR(g23, 0.0, 1e-12);
  EXPECT_NEAR(g44, 1.0, 1e-12);
  const Eigen::VectorXd v = time_basis_values(300, 0.2345);
  for (int l = 1; l <= 300; ++l) EXPECT_NEAR(v[l - 1], time_basis(l, 0.2345), 1e-12);
}

TEST(Rng, GoldenFirstDraws) {
  std::ifstream in(std::string(LAGRANFLOW_TEST_DATA) + "/rng_golden.txt");
  ASSERT_TRUE(in.good());
  CounterRng r = CounterRng::stream(12345, StreamTag::kKicks, 0);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    EXPECT_EQ(r(), std::stoull(line, nullptr, 16)) << "draw " << count;
    ++count;
  }
  EXPECT_EQ(count, 100);
}

TEST(Rng, StreamsAreDistinctAndRepeatable) {
  CounterRng a = CounterRng::stream(1, StreamTag::kKicks, 0);
  CounterRng b = CounterRng::stream(1, StreamTag::kKicks, 1);
  CounterRng c = CounterRng::stream(1, StreamTag::kKicks, 0);
  EXPECT_NE(a(), b());
  a = CounterRng::stream(1, StreamTag::kKicks, 0);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a(), c());
  for (int k = 0; k < 1000; ++k) {
    const double u = a.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Bump, SupportMeanAndIndependence) {
  CounterRng r = CounterRng::stream(7, StreamTag::kSynthetic, 0);
  const int n = 1000000;
  double mean = 0, m2 = 0;
  int exceed = 0;
  for (int k = 0; k < n; ++k) {
    const double x = sample_bump(r);
    if (!(std::abs(x) < 1.0)) ++exceed;
    mean += x;
    m2 += x * x;
  }
  mean /= n;
  const double sd = std::sqrt(m2 / n - mean * mean);
  EXPECT_EQ(exceed, 0);
  EXPECT_LT(std::abs(mean), 3 * sd / std::sqrt(double(n)));

  NoiseSpec spec;
  spec.spatial_cutoff = 2;
  spec.time_modes = 3;
  const int m = 100000;
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (int k = 0; k < m; ++k) {
    auto kick = sample_kick(spec, r);
    const double x = kick.xi(0, 0), y = kick.xi(5, 2);
    sx += x, sy += y, sxy += x * y, sxx += x * x, syy += y * y;
  }
  const double cov = sxy / m - sx / m * sy / m;
  const double corr = cov / std::sqrt((sxx / m - sx * sx / m / m) * (syy / m - sy * sy / m / m));
  EXPECT_LE(std::abs(corr), 3.0 / std::sqrt(double(m)));
}

TEST(Kick, DeterministicAndBounded) {
  NoiseSpec spec;
  spec.spatial_cutoff = 3;
  spec.time_modes = 5;
  CounterRng a = CounterRng::stream(3, StreamTag::kKicks, 2);
  CounterRng b = CounterRng::stream(3, StreamTag::kKicks, 2);
  const auto ka = sample_kick(spec, a);
  const auto kb = sample_kick(spec, b);
  EXPECT_EQ(ka.xi, kb.xi);
  EXPECT_LE(ka.xi.cwiseAbs().maxCoeff(), 1.0);
  const auto sig = ka.to_signal(spec);
  const Mode j{1, -2};
  EXPECT_DOUBLE_EQ(sig.coeff(j, 3), spec.scale(j, 3) * ka.xi(ModeSet::get(3)->index(j), 2));
  const auto back = kick_from_signal(spec, sig);
  EXPECT_LT((back.xi - ka.xi).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NoiseSpec, ScheduleDecay) {
  NoiseSpec spec;
  spec.spatial_cutoff = 8;
  auto ms = ModeSet::get(8);
  for (int m = 1; m <= 8; ++m) {
    // Smallest constant with b_j <= C_m |j|^{-m} over all j.
    const double cm = std::pow(m / spec.kappa, m) * std::exp(-double(m));
    for (const Mode& j : ms->modes()) {
      EXPECT_GT(spec.b(j), 0.0);
      EXPECT_LE(spec.b(j), cm * std::pow(j.norm(), -double(m)) * (1 + 1e-12));
    }
  }
  double partial = 0, prev = 0;
  for (int l = 1; l <= 100000; ++l) partial += spec.c(l) * spec.c(l);
  for (int l = 1; l <= 50000; ++l) prev += spec.c(l) * spec.c(l);
  EXPECT_LT(partial - prev, 1e-4);
  NoiseSpec bad = spec;
  bad.beta = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.delta = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_NO_THROW(spec.validate());
}

TEST(NoiseSpec, AmplificationOnlyLowModes) {
  NoiseSpec spec;
  spec.amplification = 10.0;
  EXPECT_EQ(spec.amp({1, 1}), 10.0);
  EXPECT_EQ(spec.amp({2, 0}), 10.0);
  EXPECT_EQ(spec.amp({2, 1}), 1.0);
}

TEST(Kick, SpectralTailBound) {
  NoiseSpec spec;
  spec.spatial_cutoff = 6;
  spec.time_modes = 8;
  auto ms = ModeSet::get(6);
  const int n0 = 3;
  double bound = 0.0;
  for (const Mode& j : ms->modes())
    if (j.linf() > n0) bound += spec.b(j) * spec.c(1) * std::sqrt(double(spec.time_modes)) * std::pow(j.norm(), 3);
  CounterRng r = CounterRng::stream(9, StreamTag::kKicks, 0);
  for (int k = 0; k < 100; ++k) {
    const auto sig = sample_kick(spec, r).to_signal(spec);
    double tail2 = 0.0;
    for (size_t i = 0; i < sig.support().size(); ++i) {
      const Mode& j = sig.support()[i];
      if (j.linf() <= n0) continue;
      tail2 += sig.data().row(i).squaredNorm() * std::pow(j.norm2(), 3);
    }
    EXPECT_LE(std::sqrt(tail2), bound);
  }
}

TEST(Margins, ZeroSignalAndBoundary) {
  NoiseSpec spec;
  spec.spatial_cutoff = 2;
  spec.time_modes = 4;
  auto ms = ModeSet::get(2);
  ControlSignal zero(ms->modes(), Eigen::MatrixXd::Zero(ms->size(), 4));
  auto m0 = support_margins(spec, zero);
  EXPECT_TRUE(m0.membership);
  EXPECT_GT(m0.min_margin, 0.0);
  EXPECT_NEAR(m0.margins(3, 1), spec.positivity_radius((*ms)[3], 2), 1e-15);

  // delta_{lj} phi_{lj} has e_j-coefficient delta_{lj} d_j.
  const Mode j = (*ms)[3];
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(ms->size(), 4);
  c(3, 1) = spec.positivity_radius(j, 2) * spec.d(j);
  ControlSignal edge(ms->modes(), c);
  EXPECT_NEAR(kick_inner_product(spec, edge, 2, j), spec.positivity_radius(j, 2), 1e-14);
  auto m1 = support_margins(spec, edge);
  EXPECT_NEAR(m1.margins(3, 1), 0.0, 1e-14);
  EXPECT_FALSE(m1.membership);

  // Coefficients beyond the noise index set are reported, not dropped.
  ControlSignal outside({{3, 0}}, Eigen::MatrixXd::Constant(1, 2, 1e-3));
  auto m2 = support_margins(spec, outside);
  EXPECT_FALSE(m2.membership);
  EXPECT_NEAR(m2.remainder_norm, std::sqrt(2.0) * 1e-3 * 27.0, 1e-12);
}

TEST(Margins, RequiredAmplificationScalesLinearly) {
  NoiseSpec spec;
  spec.spatial_cutoff = 2;
  spec.time_modes = 4;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, 4);
  c(0, 0) = 3.0;
  ControlSignal s({{1, 0}}, c);
  auto m = support_margins(spec, s);
  const double req = 3.0 / (spec.b({1, 0}) * spec.c(1) * spec.delta);
  EXPECT_NEAR(m.required_amplification, req, 1e-12);
  EXPECT_FALSE(m.membership);
  spec.amplification = 1.01 * req;
  EXPECT_TRUE(support_margins(spec, s).membership);
  spec.amplification = 0.99 * req;
  EXPECT_FALSE(support_margins(spec, s).membership);
}

TEST(Poincare, FiniteExpansions) {
  auto s = poincare_decay([](double t) { return std::sin(kTwoPi * t); }, 3);
  EXPECT_TRUE(s.super_fast);
  EXPECT_FALSE(s.periodic_warning);
  auto psi2 = [](double t) { return time_basis(2, t); };
  EXPECT_NEAR(poincare_tail(psi2, 1), 1.0, 1e-12);
  EXPECT_NEAR(poincare_tail(psi2, 2), 1.0, 1e-12);
  EXPECT_LT(poincare_tail(psi2, 3), 1e-7);
  EXPECT_LT(poincare_tail(psi2, 8), 1e-7);
}

TEST(Poincare, SmoothPeriodicDecaysFast) {
  auto d = poincare_decay([](double t) { return std::exp(std::sin(kTwoPi * t)); }, 3);
  EXPECT_FALSE(d.periodic_warning);
  EXPECT_TRUE(d.satisfies(3));
  if (!d.super_fast) EXPECT_LE(d.slope, -2.75);
}

TEST(Poincare, NonPeriodicIsFlagged) {
  auto d = poincare_decay([](double t) { return t; }, 3);
  EXPECT_TRUE(d.periodic_warning);
  EXPECT_NEAR(d.slope, -0.5, 0.1);
  // Cubic with matching values and slopes at the ends: coefficients decay like l^{-2}.
  auto c = poincare_decay([](double t) { return t * t * (1 - t) * (1 - t); }, 1);
  EXPECT_FALSE(c.periodic_warning);
  EXPECT_TRUE(c.satisfies(1));
}

TEST(ControlSignal, NodalInterpolationAndProjection) {
  const int n = 65;
  Eigen::MatrixXd v(1, n);
  for (int k = 0; k < n; ++k) {
    const double t = double(k) / (n - 1);
    v(0, k) = std::sin(3 * t) + t * t;
  }
  auto s = ControlSignal::nodal({{1, 0}}, v);
  EXPECT_DOUBLE_EQ(s.eval(0.25)[0], v(0, 16));
  EXPECT_NEAR(s.eval(0.3)[0], std::sin(0.9) + 0.09, 1e-7);
  auto sp = ControlSignal({{0, 1}}, Eigen::MatrixXd::Constant(1, 3, 0.5));
  EXPECT_NEAR(sp.eval(0.1)[0], 0.5 * (1 + time_basis(2, 0.1) + time_basis(3, 0.1)), 1e-14);
  auto sum = sp + sp * 2.0;
  EXPECT_NEAR(sum.coeff({0, 1}, 2), 1.5, 1e-15);
  EXPECT_EQ(sum.coeff({0, 2}, 2), 0.0);
  EXPECT_NEAR(sp.l2_norm(), std::sqrt(0.75), 1e-14);
}

TEST(ControlSignal, TranslationMatchesFieldShift) {
  Eigen::MatrixXd c(2, 2);
  c << 1.0, -0.5, 0.3, 0.7;
  ControlSignal s({{1, 2}, {0, -1}}, c);
  const Vec2 shift(0.4, -1.3);
  auto ts = s.translated(shift);
  for (double t : {0.1, 0.6}) {
    const auto f = s.field_at(t, 3);
    const auto g = ts.field_at(t, 3);
    for (const Vec2& x : {Vec2(0.2, 0.9), Vec2(4.0, 1.1)})
      EXPECT_LT((eval_field(g, x) - eval_field(f, x - shift)).norm(), 1e-13);
  }
}
