#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lagranflow/dynamics.hpp"

namespace lagranflow {

// d_X = ||u - u'||_{L2} + geodesic torus distance of the particles.
double state_distance(const SystemState& a, const SystemState& b);

// R = A^T (A A^T + gamma I)^{-1} with a cached factorization.
class RightInverse {
 public:
  RightInverse() = default;
  RightInverse(Eigen::MatrixXd A, double gamma);

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  Eigen::MatrixXd matrix() const;
  // ||A R f - f|| for a given target.
  double residual(const Eigen::VectorXd& f) const;

  const Eigen::MatrixXd& A() const { return A_; }
  double gamma() const { return gamma_; }
  double condition_number() const { return condition_; }
  // Condition number of A A^T + gamma I above 1e12.
  bool ill_conditioned() const { return condition_ > 1e12; }

 private:
  Eigen::MatrixXd A_;
  double gamma_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double condition_ = 0.0;
};

RightInverse approximate_right_inverse(const Eigen::MatrixXd& A, double gamma);

// Kick directions scale(j, l) psi_l e_j for all noise modes j and l <= M,
// ordered l-major so that the families are nested in M.
std::vector<ControlSignal> control_subspace(const NoiseSpec& spec, int M);

class LocalityError : public std::domain_error {
 public:
  LocalityError(double distance, double radius);
  double distance() const { return distance_; }
  double radius() const { return radius_; }

 private:
  double distance_;
  double radius_;
};

struct ShiftOptions {
  int control_time_modes = 4;  // M: dimension of F_M is (noise modes) x M
  double gamma = 1e-8;
  double locality_radius = 1e-2;
};

// Linearization of S at (state, kick) with the right inverse of D_eta S
// restricted to F_M.
class ShiftOperator {
 public:
  ShiftOperator(const SystemState& base, const KickRealization& kick, const NoiseSpec& spec,
                const FlowParams& fp, const ShiftOptions& opts = {});
  // Reuses the dense record of an already computed step from `base`.
  ShiftOperator(const SystemState& base, const KickRealization& kick, const DenseRecord& record,
                const NoiseSpec& spec, const FlowParams& fp, const ShiftOptions& opts = {});

  const SystemState& base() const { return base_; }
  const KickRealization& kick() const { return kick_; }
  const Eigen::MatrixXd& jacobian() const { return inverse_.A(); }
  const RightInverse& inverse() const { return inverse_; }
  int control_dimension() const { return static_cast<int>(inverse_.A().cols()); }
  const ShiftOptions& options() const { return opts_; }
  const NoiseSpec& spec() const { return spec_; }

  // Kick-coordinate shift -R (D_state S)(other - base); throws LocalityError
  // beyond the locality radius.
  KickRealization shift_coordinates(const SystemState& other) const;
  // (D_state S)(other - base) as a state-space vector.
  Eigen::VectorXd propagated_difference(const SystemState& other) const;

 private:
  void build(const DenseRecord& record);

  SystemState base_;
  KickRealization kick_;
  NoiseSpec spec_;
  FlowParams fp_;
  ShiftOptions opts_;
  DenseRecord record_;
  RightInverse inverse_;
};

// Difference other - base as a state-space vector (field rows, then the
// minimal torus lift of the particle displacement).
Eigen::VectorXd state_difference(const SystemState& base, const SystemState& other);

// Phi = -R (D_state S)(other - base) as a forcing signal.
ControlSignal stabilizing_shift(const SystemState& base, const SystemState& other, const KickRealization& kick,
                                const ShiftOperator& op);

enum class CouplingKind {
  // eta' = eta + Phi when that stays in the support box, else eta' = eta.
  kSynchronous,
  // Maximal coupling of the kick law with its Phi-translate: eta' = eta + Phi
  // with probability min(1, l(eta + Phi) / l(eta)), else eta' is drawn from
  // the residual law, so eta' is exactly noise-distributed.
  kMaximal,
};

struct CouplingOptions {
  CouplingKind kind = CouplingKind::kSynchronous;
  double q = 0.7;
  ShiftOptions shift;
  // Steps with d_{k-1} below this floor or above the locality radius are not
  // counted as contraction tests.
  double distance_floor = 1e-13;
  std::uint64_t stream_index = 0;
  // Maximal coupling: cap on residual-law rejection rounds.
  int residual_cap = 1000000;
};

struct CouplingFailure {
  int step = 0;
  std::string reason;  // "support", "locality", "maximal" or "residual-cap"
};

struct CouplingReport {
  std::vector<double> distances;        // d_0 .. d_K
  std::vector<double> squeeze_factors;  // d_k / d_{k-1}; NaN when not tested
  std::vector<bool> contraction;        // d_k <= q d_{k-1} (true when not tested)
  std::vector<CouplingFailure> failures;
  std::vector<double> first_energy;     // energy of the first component
  int tested_steps = 0;
  int non_contraction_events = 0;
  double gamma_mix = 0.0;  // -slope of log d_k over tested steps
  double q = 0.0;

  double non_contraction_frequency() const {
    return tested_steps > 0 ? static_cast<double>(non_contraction_events) / tested_steps : 0.0;
  }
};

// Draw of eta' given eta under the maximal coupling of the kick law l with
// its translate by `shift` (kick coordinates): eta' is l-distributed and
// equals eta + shift with probability 1 - TV(l, l(. - shift)).
KickRealization maximal_coupled_kick(const KickRealization& eta, const Eigen::MatrixXd& shift, const NoiseSpec& spec,
                                     CounterRng& rng, int residual_cap = 1000000, bool* coupled = nullptr,
                                     bool* capped = nullptr);

// The first component is run_chain(a, spec, fp, seed, K) exactly; the second
// is driven by the coupled kick of `opts.kind`.
CouplingReport coupled_pair_run(const SystemState& a, const SystemState& b, const NoiseSpec& spec,
                                const FlowParams& fp, std::uint64_t seed, int K, const CouplingOptions& opts = {});

// State at d_X distance d from s in a random direction.
SystemState perturbed_state(const SystemState& s, double d, std::uint64_t seed, std::uint64_t index);

struct CouplingExperiment {
  std::vector<double> d0;
  std::vector<double> frequency;
  std::vector<int> events;
  std::vector<int> tested;
  std::vector<int> support_failures;
  std::vector<int> coupling_failures;  // maximal-coupling rejections
  double slope = 0.0;      // frequency ~ intercept + slope d0
  double intercept = 0.0;
  double r_squared = 0.0;
  double fitted_c = 0.0;   // smallest C with frequency <= C d0 at every d0
  // reports[di * pairs + i]: pair i at d0[di].
  std::vector<CouplingReport> reports;
};

// Pairs (s_i, perturbed(s_i, d0)) with s_i drawn along a burnt-in chain.
CouplingExperiment coupling_experiment(const NoiseSpec& spec, const FlowParams& fp, const std::vector<double>& d0,
                                       int pairs, int K, const CouplingOptions& opts, std::uint64_t seed,
                                       int burn_in = 20, int workers = 0);

struct MixingOptions {
  int trajectories = 1000;  // per initial state
  int K = 10;
  int fourier_radius = 3;   // particle observables e^{i<m,y>}, 1 <= |m|_inf <= radius
  int tv_bins = 8;
  int workers = 0;
  std::uint64_t seed = 1;
};

struct MixingReport {
  std::vector<std::string> observables;
  // means[state][k][obs] and standard errors.
  std::vector<std::vector<std::vector<double>>> means;
  std::vector<std::vector<std::vector<double>>> std_errors;
  std::vector<double> discrepancy;  // Euclidean over observables, max over state pairs
  std::vector<double> noise_floor;
  std::vector<double> particle_tv;  // binned TV of the particle marginal, max over state pairs
  std::vector<int> fit_steps;
  double gamma_mix = 0.0;
  double gamma_lower = 0.0;  // slope - 2 SE
  double gamma_upper = 0.0;
  bool mixing_detected = false;
  std::string message;
};

MixingReport estimate_mixing_rate(const NoiseSpec& spec, const FlowParams& fp,
                                  const std::vector<SystemState>& initial_states, const MixingOptions& opts);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lagranflow
