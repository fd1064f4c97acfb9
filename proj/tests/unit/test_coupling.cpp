#include <gtest/gtest.h>

#include <random>

#include "lagranflow/coupling.hpp"

using namespace lagranflow;

namespace {

NoiseSpec spec2() {
  NoiseSpec s;
  s.spatial_cutoff = 2;
  return s;
}

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) A(i, j) = g(rng);
  return A;
}

struct Base {
  Trajectory tr;
  NoiseSpec spec = spec2();
  FlowParams fp;
  Base() { tr = run_chain(SystemState::rest(2, Vec2(1.0, 2.0)), spec, fp, 5, 60, {true, false, 0}); }
};

const Base& base() {
  static const Base b;
  return b;
}

}  // namespace

TEST(RightInverse, IdentityClosedForm) {
  const double g = 1e-6;
  const RightInverse R = approximate_right_inverse(Eigen::MatrixXd::Identity(2, 2), g);
  EXPECT_LE((R.A() * R.matrix() - Eigen::MatrixXd::Identity(2, 2)).norm(), 2e-6);
  EXPECT_LE((R.matrix() - Eigen::MatrixXd::Identity(2, 2) / (1.0 + g)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_FALSE(R.ill_conditioned());
}

TEST(RightInverse, RankOneRow) {
  Eigen::MatrixXd A(1, 2);
  A << 1.0, 0.0;
  for (double g : {1e-2, 1e-4, 1e-8}) {
    const RightInverse R(A, g);
    Eigen::VectorXd f(1);
    f << 1.0;
    EXPECT_NEAR((A * R.apply(f))[0], 1.0 / (1.0 + g), 1e-15);
  }
}

TEST(RightInverse, GammaSweepMatchesSvd) {
  const Eigen::MatrixXd A = random_matrix(10, 40, 3);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const double smin = svd.singularValues().minCoeff();
  double prev = std::numeric_limits<double>::infinity();
  for (double g : {1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
    const RightInverse R(A, g);
    const double err = (A * R.matrix() - Eigen::MatrixXd::Identity(10, 10)).operatorNorm();
    EXPECT_LT(err, prev);
    EXPECT_NEAR(err, g / (smin * smin + g), 1e-10);
    prev = err;
  }
}

TEST(RightInverse, RejectsNonpositiveGammaAndFlagsConditioning) {
  EXPECT_THROW(RightInverse(Eigen::MatrixXd::Identity(2, 2), 0.0), std::invalid_argument);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 3);
  A(0, 0) = 1.0;
  A(1, 1) = 1e-9;
  EXPECT_TRUE(RightInverse(A, 1e-14).ill_conditioned());
  EXPECT_FALSE(RightInverse(A, 1e-4).ill_conditioned());
}

TEST(ControlSubspace, NestedFamilyImprovesResidual) {
  const Base& b = base();
  ShiftOptions so;
  so.control_time_modes = b.spec.time_modes;
  const ShiftOperator full(b.tr.states[10], b.tr.kicks[10], b.spec, b.fp, so);
  const int n = ModeSet::get(2)->size();
  EXPECT_EQ(full.control_dimension(), n * b.spec.time_modes);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd f(n + 2);
    for (int i = 0; i < n + 2; ++i) f[i] = g(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (int M = 1; M <= 6; ++M) {
      const RightInverse R(full.jacobian().leftCols(n * M), 1e-8);
      const double res = R.residual(f);
      EXPECT_LT(res, prev) << "M=" << M;
      prev = res;
    }
  }
  const std::vector<ControlSignal> c2 = control_subspace(b.spec, 2);
  ASSERT_EQ(static_cast<int>(c2.size()), 2 * n);
  EXPECT_EQ(c2[n].support()[0], c2[0].support()[0]);
  EXPECT_EQ(c2[n].time_modes(), 2);
}

TEST(StabilizingShift, TrivialLinearAndLocality) {
  const Base& b = base();
  const SystemState& s = b.tr.states[12];
  const KickRealization& k = b.tr.kicks[12];
  const ShiftOperator op(s, k, b.spec, b.fp);
  EXPECT_EQ(stabilizing_shift(s, s, k, op).l2_norm(), 0.0);
  const SystemState s1 = perturbed_state(s, 1e-3, 3, 0);
  SystemState s2 = s;
  s2.u.coeffs() += 2.0 * (s1.u.coeffs() - s.u.coeffs());
  s2.y = wrap_point(s.y + 2.0 * torus_delta(s.y, s1.y));
  const double n1 = stabilizing_shift(s, s1, k, op).l2_norm();
  const double n2 = stabilizing_shift(s, s2, k, op).l2_norm();
  EXPECT_NEAR(n2 / n1, 2.0, 1e-6);
  const SystemState far = perturbed_state(s, 2e-2, 3, 1);
  try {
    op.shift_coordinates(far);
    FAIL() << "expected refusal";
  } catch (const LocalityError& e) {
    EXPECT_NEAR(e.distance(), 2e-2, 1e-14);
    EXPECT_EQ(e.radius(), 1e-2);
  }
  EXPECT_THROW(stabilizing_shift(b.tr.states[13], s1, k, op), std::invalid_argument);
}

TEST(StabilizingShift, SqueezesAndNormIsLinearInDistance) {
  const Base& b = base();
  std::vector<double> ratio_a, ratio_b;
  int squeezed = 0;
  for (int i = 0; i < 20; ++i) {
    const SystemState& s = b.tr.states[20 + i];
    const KickRealization& k = b.tr.kicks[20 + i];
    const ShiftOperator op(s, k, b.spec, b.fp);
    for (double d : {1e-3, 1e-4}) {
      const SystemState o = perturbed_state(s, d, 8, i);
      const KickRealization sh = op.shift_coordinates(o);
      KickRealization k2 = k;
      k2.xi += sh.xi;
      (d == 1e-3 ? ratio_a : ratio_b).push_back(sh.to_signal(b.spec).l2_norm() / d);
      if (d == 1e-3) {
        const double q = state_distance(step_map(s, k, b.spec, b.fp), step_map(o, k2, b.spec, b.fp)) / d;
        squeezed += q <= 0.5;
      }
    }
  }
  EXPECT_EQ(squeezed, 20);
  const double C = *std::max_element(ratio_a.begin(), ratio_a.end());
  for (size_t i = 0; i < ratio_b.size(); ++i) {
    EXPECT_LE(ratio_b[i], C * (1.0 + 1e-6));
    EXPECT_NEAR(ratio_b[i], ratio_a[i], 1e-6 * ratio_a[i]);
  }
}

TEST(CoupledPair, IdenticalStartsStayTogether) {
  const Base& b = base();
  const CouplingReport r = coupled_pair_run(b.tr.states[5], b.tr.states[5], b.spec, b.fp, 9, 6);
  ASSERT_EQ(r.distances.size(), 7u);
  for (double d : r.distances) EXPECT_EQ(d, 0.0);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.tested_steps, 0);
  EXPECT_EQ(r.non_contraction_frequency(), 0.0);
}

TEST(CoupledPair, FirstComponentIsTheChain) {
  const Base& b = base();
  const SystemState& s = b.tr.states[7];
  for (CouplingKind kind : {CouplingKind::kSynchronous, CouplingKind::kMaximal}) {
    CouplingOptions o;
    o.kind = kind;
    o.stream_index = 3;
    const CouplingReport r = coupled_pair_run(s, perturbed_state(s, 1e-3, 1, 1), b.spec, b.fp, 21, 8, o);
    const Trajectory chain = run_chain(s, b.spec, b.fp, 21, 8, {false, false, 3});
    for (int k = 0; k <= 8; ++k) EXPECT_EQ(r.first_energy[k], energy(chain.states[k].u));
  }
}

TEST(CoupledPair, ContractsToTheFloor) {
  const Base& b = base();
  const SystemState& s = b.tr.states[30];
  CouplingOptions o;
  o.stream_index = 4;
  const CouplingReport r = coupled_pair_run(s, perturbed_state(s, 1e-3, 2, 2), b.spec, b.fp, 4, 10, o);
  EXPECT_GE(r.tested_steps, 2);
  EXPECT_EQ(r.non_contraction_events, 0);
  EXPECT_LE(r.distances.back(), 1e-12);
  EXPECT_GT(r.gamma_mix, 1.0);
}

TEST(CoupledPair, MaximalCoupledKickHasTheNoiseLaw) {
  NoiseSpec spec;
  spec.spatial_cutoff = 1;
  spec.time_modes = 1;
  const int n = ModeSet::get(1)->size();
  Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(n, 1);
  shift(0, 0) = 0.3;
  // 1 - TV between the bump law and its translate, by quadrature.
  const int Q = 200000;
  double z = 0.0, overlap = 0.0;
  for (int q = 0; q < Q; ++q) {
    const double r = -1.0 + (q + 0.5) * 2.0 / Q;
    z += bump_density(r);
    overlap += std::min(bump_density(r), bump_density(r - 0.3));
  }
  overlap /= z;
  CounterRng rng = CounterRng::stream(1, StreamTag::kSynthetic, 0);
  CounterRng draws = CounterRng::stream(1, StreamTag::kSynthetic, 1);
  const int T = 40000;
  double m1 = 0.0, m2 = 0.0, m1_ref = 0.0, m2_ref = 0.0;
  int coupled_count = 0;
  for (int t = 0; t < T; ++t) {
    const KickRealization eta = sample_kick(spec, draws);
    bool coupled = false, capped = true;
    const KickRealization out = maximal_coupled_kick(eta, shift, spec, rng, 1000000, &coupled, &capped);
    ASSERT_FALSE(capped);
    coupled_count += coupled;
    if (coupled) ASSERT_NEAR(out.xi(0, 0), eta.xi(0, 0) + 0.3, 1e-15);
    m1 += out.xi(0, 0);
    m2 += out.xi(0, 0) * out.xi(0, 0);
    m1_ref += eta.xi(0, 0);
    m2_ref += eta.xi(0, 0) * eta.xi(0, 0);
    ASSERT_LT(std::abs(out.xi(0, 0)), 1.0);
  }
  const double p = overlap;
  EXPECT_NEAR(static_cast<double>(coupled_count) / T, p, 4.0 * std::sqrt(p * (1 - p) / T));
  // Bump variance is about 0.2; mean and second moment agree with direct draws.
  EXPECT_NEAR(m1 / T, 0.0, 4.0 * std::sqrt(0.2 / T));
  EXPECT_NEAR(m2 / T, m2_ref / T, 0.01);
}

TEST(LineFitting, ExactAndNoisy) {
  const LineFit f = fit_line({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  EXPECT_NEAR(f.slope, 2.0, 1e-15);
  EXPECT_NEAR(f.intercept, 1.0, 1e-15);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-15);
  EXPECT_NEAR(f.slope_se, 0.0, 1e-15);
  const LineFit g = fit_line({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
  EXPECT_NEAR(g.slope, 0.0, 1e-15);
  EXPECT_NEAR(g.r_squared, 0.0, 1e-15);
  EXPECT_THROW(fit_line({1.0, 1.0}, {0.0, 1.0}), std::invalid_argument);
}

TEST(Mixing, IdenticalStatesSitAtNoiseFloor) {
  const Base& b = base();
  MixingOptions mo;
  mo.trajectories = 200;
  mo.K = 4;
  mo.seed = 3;
  const SystemState s = SystemState::rest(2, Vec2(1.0, 1.0));
  const MixingReport r = estimate_mixing_rate(b.spec, b.fp, {s, s}, mo);
  EXPECT_EQ(r.observables.size(), 1u + 2u * 24u);
  EXPECT_EQ(r.discrepancy[0], 0.0);
  for (int k = 1; k <= mo.K; ++k) EXPECT_LE(r.discrepancy[k], 3.0 * r.noise_floor[k]) << k;
  EXPECT_FALSE(r.mixing_detected);
}

TEST(Mixing, DistinctStatesDecay) {
  const Base& b = base();
  MixingOptions mo;
  mo.trajectories = 400;
  mo.K = 10;
  mo.seed = 5;
  SystemState hot = SystemState::rest(2, Vec2(1.0, 1.0));
  for (int i = 0; i < hot.u.size(); ++i) hot.u.coeffs()[i] = 3.0 / hot.u.modes()[i].norm2();
  const MixingReport r = estimate_mixing_rate(b.spec, b.fp, {SystemState::rest(2, Vec2(1.0, 1.0)), hot}, mo);
  EXPECT_TRUE(r.mixing_detected) << r.message;
  EXPECT_GT(r.gamma_lower, 0.0);
  EXPECT_LE(r.particle_tv[10], r.particle_tv[2]);
}

TEST(Mixing, OutputIndependentOfWorkers) {
  const Base& b = base();
  MixingOptions mo;
  mo.trajectories = 20;
  mo.K = 3;
  mo.workers = 1;
  const SystemState s0 = SystemState::rest(2, Vec2(1.0, 1.0));
  const SystemState s1 = SystemState::rest(2, Vec2(3.0, 1.0));
  const MixingReport a = estimate_mixing_rate(b.spec, b.fp, {s0, s1}, mo);
  mo.workers = 3;
  const MixingReport c = estimate_mixing_rate(b.spec, b.fp, {s0, s1}, mo);
  EXPECT_EQ(a.means, c.means);
  EXPECT_EQ(a.discrepancy, c.discrepancy);
  EXPECT_EQ(a.particle_tv, c.particle_tv);
}
