#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lagranflow/measures.hpp"

using namespace lagranflow;

namespace {

NoiseSpec spec2() {
  NoiseSpec s;
  s.spatial_cutoff = 2;
  return s;
}

ParticleSamples uniform_samples(int n, int t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  ParticleSamples s;
  s.t = t;
  s.y.resize(n, 2 * t);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 2 * t; ++c) s.y(i, c) = u(rng);
  return s;
}

// y1 with density 1 + 0.5 cos(y1), y2 uniform.
ParticleSamples cosine_samples(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, kTwoPi), v(0.0, 1.5);
  ParticleSamples s;
  s.t = 1;
  s.y.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    double x;
    do x = u(rng);
    while (v(rng) > 1.0 + 0.5 * std::cos(x));
    s.y(i, 0) = x;
    s.y(i, 1) = u(rng);
  }
  return s;
}

}  // namespace

TEST(Fingerprint, StableAndSensitive) {
  const NoiseSpec s = spec2();
  FlowParams fp;
  const std::string h = spec_fingerprint(s, fp);
  EXPECT_EQ(h.size(), 16u);
  EXPECT_EQ(h, spec_fingerprint(s, fp));
  fp.nu = 0.1000000001;
  EXPECT_NE(h, spec_fingerprint(s, fp));
}

TEST(Ensemble, SinglePathReproducesChain) {
  const SystemState s0 = SystemState::rest(2, Vec2(1.0, 2.0));
  const NoiseSpec spec = spec2();
  const FlowParams fp;
  const ParticleSamples e = run_ensemble(s0, spec, fp, 3, 1, 9, 1, 4);
  ChainOptions co;
  co.stream_index = 4;
  const Trajectory tr = run_chain(s0, spec, fp, 9, 3, co);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(e.y(0, 2 * k), tr.states[k + 1].y[0]);
    EXPECT_EQ(e.y(0, 2 * k + 1), tr.states[k + 1].y[1]);
  }
  EXPECT_EQ(e.spec_hash, spec_fingerprint(spec, fp));
}

TEST(Ensemble, WorkerCountIndependent) {
  const SystemState s0 = SystemState::rest(2, Vec2(0.5, 0.5));
  const ParticleSamples a = run_ensemble(s0, spec2(), {}, 2, 12, 3, 1);
  const ParticleSamples b = run_ensemble(s0, spec2(), {}, 2, 12, 3, 4);
  EXPECT_EQ(a.y, b.y);
}

TEST(Ensemble, StationaryWindowsSlideAlongOneChain) {
  const SystemState s0 = SystemState::rest(2, Vec2(1.0, 1.0));
  const ParticleSamples w = stationary_windows(s0, spec2(), {}, 2, 5, 3, 11, 2);
  ChainOptions co;
  co.stream_index = 2;
  const Trajectory tr = run_chain(s0, spec2(), {}, 11, 9, co);
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(w.y.block(k, 2 * j, 1, 2).transpose(), tr.states[3 + k + 1 + j].y);
}

TEST(Density, UniformHistogramDeviationBound) {
  for (int t : {1, 2}) {
    const int n = 40000, K = 4;
    const ParticleSamples s = uniform_samples(n, t, 17 + t);
    DensityOptions o;
    o.bins = K;
    const DensityEstimate e = estimate_density(s, o);
    const double cells = std::pow(K, 2 * t);
    EXPECT_EQ(e.cells(), static_cast<int>(cells));
    EXPECT_NEAR(e.integral(), 1.0, 1e-12);
    EXPECT_LE((e.values.array() - 1.0).abs().maxCoeff(), 4.0 * std::sqrt(cells / n));
    EXPECT_FALSE(e.under_resolved);
  }
}

TEST(Density, PointMassFillsOneCell) {
  ParticleSamples s;
  s.y = Eigen::MatrixXd::Constant(50, 2, 1.0);
  DensityOptions o;
  o.bins = 8;
  const DensityEstimate e = estimate_density(s, o);
  const int c = e.cell_of(Eigen::Vector2d(1.0, 1.0));
  EXPECT_DOUBLE_EQ(e.values[c], 64.0);
  EXPECT_DOUBLE_EQ(e.values.sum(), 64.0);
  EXPECT_EQ(e.counts.sum(), 50);
  EXPECT_TRUE(e.under_resolved);
}

TEST(Density, HistogramMatchesCellAverages) {
  const int n = 40000, K = 8;
  const DensityEstimate e = estimate_density(cosine_samples(n, 3), {DensityMethod::kHistogram, K});
  for (int c = 0; c < e.cells(); ++c) {
    const Eigen::VectorXd x = e.cell_center(c);
    const double a = x[0] - kPi / K, b = x[0] + kPi / K;
    const double exact = 1.0 + 0.5 * (std::sin(b) - std::sin(a)) / (b - a);
    EXPECT_LE(std::abs(e.values[c] - exact), 4.5 * e.std_errors[c]) << c;
  }
}

TEST(Density, KdeNormalizedAndAgreesWithHistogram) {
  const ParticleSamples s = cosine_samples(20000, 4);
  DensityOptions k;
  k.method = DensityMethod::kKde;
  k.grid = 8;
  const DensityEstimate kde = estimate_density(s, k);
  EXPECT_NEAR(kde.integral(), 1.0, 1e-6);
  EXPECT_NEAR(kde.normalization, 1.0, 1e-2);
  EXPECT_NEAR(kde.bandwidth, std::pow(20000.0, -1.0 / 6.0), 1e-15);
  const DensityEstimate hist = estimate_density(s, {DensityMethod::kHistogram, 8});
  EXPECT_LE((kde.values - hist.values).cwiseAbs().maxCoeff(), 0.12);
  // grid values equal point evaluation
  for (int c : {0, 7, 33, 63}) EXPECT_NEAR(kde.at(kde.cell_center(c)), kde.values[c], 1e-12);
}

TEST(Density, RejectsBadOptions) {
  const ParticleSamples s = uniform_samples(10, 1, 1);
  EXPECT_THROW(estimate_density(s, {DensityMethod::kHistogram, 0}), std::invalid_argument);
  EXPECT_THROW(estimate_density(uniform_samples(10, 4, 1), {DensityMethod::kKde}), std::invalid_argument);
}

TEST(ClopperPearson, ClosedFormsAndTable) {
  auto [lo0, hi0] = clopper_pearson(0, 10, 0.05);
  EXPECT_EQ(lo0, 0.0);
  EXPECT_NEAR(hi0, 1.0 - std::pow(0.025, 0.1), 1e-12);
  auto [lon, hin] = clopper_pearson(10, 10, 0.05);
  EXPECT_NEAR(lon, std::pow(0.025, 0.1), 1e-12);
  EXPECT_EQ(hin, 1.0);
  auto [lo, hi] = clopper_pearson(5, 10, 0.05);
  EXPECT_NEAR(lo, 0.187086, 1e-6);
  EXPECT_NEAR(hi, 0.812914, 1e-6);
}

TEST(DensityExtrema, BandsBracketEstimates) {
  const std::vector<SystemState> st{SystemState::rest(2, Vec2(1.0, 2.0)), SystemState::rest(2, Vec2(4.0, 0.5))};
  const DensityExtrema ex = density_extrema(spec2(), {}, st, 4, 300, 7, 0);
  ASSERT_EQ(ex.estimates.size(), 2u);
  EXPECT_LE(ex.m_lower, ex.m_hat);
  EXPECT_LE(ex.m_hat, ex.m_upper);
  EXPECT_LE(ex.M_lower, ex.M_hat);
  EXPECT_LE(ex.M_hat, ex.M_upper);
  EXPECT_EQ(ex.m_hat, ex.estimates[ex.argmin_state].values[ex.argmin_cell]);
  EXPECT_EQ(ex.M_hat, ex.estimates[ex.argmax_state].values[ex.argmax_cell]);
  EXPECT_EQ(ex.positive(), ex.m_lower > 0.0);
}

TEST(EntropyProduction, PalindromeAndAntisymmetry) {
  const ParticleSamples s = uniform_samples(3000, 2, 8);
  DensityOptions o;
  o.method = DensityMethod::kKde;
  o.grid = 4;
  const DensityEstimate rho = estimate_density(s, o);
  Eigen::VectorXd pal(4);
  pal << 1.0, 2.0, 1.0, 2.0;
  EXPECT_EQ(entropy_production(rho, pal), 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd p(4);
    for (int c = 0; c < 4; ++c) p[c] = u(rng);
    EXPECT_EQ(entropy_production(rho, p), -entropy_production(rho, reversed_path(p)));
  }
}

TEST(EntropyProduction, UndefinedWhenReversalHasNoMass) {
  ParticleSamples s;
  s.t = 2;
  s.y.resize(1, 4);
  s.y << 0.1, 0.1, 3.0, 3.0;
  const DensityEstimate rho = estimate_density(s, {DensityMethod::kHistogram, 4});
  Eigen::VectorXd p = s.y.row(0).transpose();
  try {
    entropy_production(rho, p);
    FAIL() << "expected UndefinedEntropyProduction";
  } catch (const UndefinedEntropyProduction& e) {
    EXPECT_EQ(e.ordering(), reversed_path(p));
  }
  const EpBoundCheck c = ep_bound_check(rho, s, 1.0, 2.0, 0.0);
  EXPECT_EQ(c.undefined, 1);
  EXPECT_EQ(c.within, 0);
}

TEST(EntropyProduction, BoundAndCheck) {
  EXPECT_DOUBLE_EQ(ep_bound(0.5, 0.5 * std::exp(1.0)), 1.0);
  EXPECT_THROW(ep_bound(0.0, 1.0), std::invalid_argument);
  const ParticleSamples s = uniform_samples(5000, 2, 12);
  const DensityEstimate rho = estimate_density(s, {DensityMethod::kHistogram, 2});
  const EpBoundCheck c = ep_bound_check(rho, s, rho.values.minCoeff(), rho.values.maxCoeff(), 0.0);
  EXPECT_EQ(c.paths, 5000);
  EXPECT_EQ(c.undefined, 0);
  EXPECT_EQ(c.within, 5000);
  EXPECT_LE(c.max_abs, c.bound);
}

TEST(Stationarity, IidUniformPasses) {
  const int n = 20000;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::vector<Vec2> y(n);
  std::vector<double> en(n);
  for (int i = 0; i < n; ++i) {
    y[i] = Vec2(u(rng), u(rng));
    en[i] = u(rng);
  }
  const StationarityReport r = stationarity_from_samples(y, en, {});
  EXPECT_EQ(r.dof, 63);
  EXPECT_GT(r.p_value, 1e-3);
  EXPECT_NEAR(r.inflation, 1.0, 0.3);
  EXPECT_EQ(r.harmonics.size(), 24u);
  EXPECT_TRUE(r.harmonics_ok());
  EXPECT_EQ(r.energy_correlation.size(), 48u);
  EXPECT_LE(r.max_correlation, r.correlation_bound * 1.5);
}

TEST(Stationarity, SkewedAndCorrelatedSeriesDetected) {
  const int n = 20000;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<Vec2> walk(n), skew(n);
  Vec2 p(1.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int i = 0; i < n; ++i) {
    p = wrap_point(p + Vec2(g(rng), g(rng)));
    walk[i] = p;
    skew[i] = Vec2(std::fmod(u(rng) * u(rng) / kTwoPi, kTwoPi), u(rng));
  }
  const StationarityReport w = stationarity_from_samples(walk, {}, {});
  EXPECT_GT(w.inflation, 5.0);
  EXPECT_TRUE(stationarity_from_samples(skew, {}, {}).rejected());
}

TEST(Convergence, IdenticalWindowsGiveZero) {
  ConvergenceOptions o;
  o.windows = {6};
  o.reference_window = 6;
  o.trajectories = 40;
  o.bins = 4;
  const ConvergenceReport r = convergence_report(spec2(), {}, {SystemState::rest(2, Vec2(1.0, 2.0))}, o);
  ASSERT_EQ(r.discrepancy.size(), 1u);
  EXPECT_EQ(r.discrepancy[0], 0.0);
  EXPECT_TRUE(r.inconclusive);
}

TEST(Convergence, DisjointStreamsIndistinguishable) {
  const SystemState s0 = SystemState::rest(2, Vec2(1.0, 2.0));
  NoiseSpec spec = spec2();
  spec.amplification = 20.0;
  FlowParams fp;
  fp.substeps = 128;
  const ParticleSamples a = run_ensemble(s0, spec, fp, 1, 500, 21, 0, 0);
  const ParticleSamples b = run_ensemble(s0, spec, fp, 1, 500, 21, 0, 500);
  const auto [d, floor] = sup_discrepancy(estimate_density(a, {DensityMethod::kHistogram, 4}),
                                          estimate_density(b, {DensityMethod::kHistogram, 4}));
  EXPECT_GT(d, 0.0);
  EXPECT_LE(d, floor);
}

TEST(EmpiricalMeasure, WindowsAndWeights) {
  const Trajectory tr = run_chain(SystemState::rest(2, Vec2(1.0, 2.0)), spec2(), {}, 3, 6);
  const EmpiricalMeasure m = empirical_measure(tr, 2);
  EXPECT_EQ(m.points.rows(), 6);
  EXPECT_EQ(m.points.cols(), 8);
  EXPECT_EQ(m.features.size(), 8u);
  EXPECT_NEAR(m.weights.sum(), 1.0, 1e-15);
  EXPECT_EQ(m.points(3, 6), tr.states[4].y[0]);
  EXPECT_THROW(empirical_measure(tr, 8), std::invalid_argument);
}
