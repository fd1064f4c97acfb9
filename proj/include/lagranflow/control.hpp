#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lagranflow/dynamics.hpp"
#include "lagranflow/noise.hpp"
#include "lagranflow/smooth.hpp"

namespace lagranflow {

// Modes with |j|_1 <= 2 in canonical order.
std::vector<Mode> low_mode_support();

struct SynthesisOptions {
  int time_modes = 512;
  int quadrature = 4096;
};

// Control whose Galerkin solution from rest is u(t, x) = phi1(t) U1(x - c(t)) +
// phi2(t) U2(x - c(t)) with U1 = (cos x2, 0), U2 = (0, cos x1).
struct TransportAnsatz {
  // At time t: phi, d/dt phi, c, d/dt c.
  struct Jet {
    Vec2 phi;
    Vec2 dphi;
    Vec2 c;
    Vec2 dc;
  };
  std::function<Jet(double)> jet;
};

// Field coefficients (cutoff 2) of phi1 U1(x - c) + phi2 U2(x - c).
Eigen::VectorXd ansatz_coeffs(const Vec2& phi, const Vec2& c);
Eigen::VectorXd ansatz_coeffs_dot(const Vec2& phi, const Vec2& dphi, const Vec2& c, const Vec2& dc);

// Pi g = du/dt + nu |j|^2 u + B(u) for the ansatz at time t, on low_mode_support().
Eigen::VectorXd ansatz_forcing(const TransportAnsatz& a, double nu, double t);

struct ParticleSteering {
  ControlSignal control;
  Vec2 displacement = Vec2::Zero();
  bool tie = false;
  SmoothStep step{1.0 / 3.0, 2.0 / 3.0};

  Vec2 gamma(const Vec2& p, double t) const { return p + step(t) * displacement; }
};

// Steers the particle from p to p_hat along gamma(t) = p + alpha(t) (p_hat - p)
// with the fluid starting and ending at rest.
ParticleSteering steer_particle_control(const Vec2& p, const Vec2& p_hat, double nu,
                                        const SynthesisOptions& opts = {});

// Same construction on an arbitrary step window.
ParticleSteering transport_control(const Vec2& p, const Vec2& p_hat, double nu, double t0, double t1,
                                   const SynthesisOptions& opts = {});

struct DecayFit {
  double exponent = 0.0;  // r in |alpha_l| <= C l^{-r}
  int l_min = 0;
  int l_max = 0;
};
DecayFit coefficient_decay(const ControlSignal& s);

struct SteeringReport {
  double endpoint_error = 0.0;
  double endpoint_field_norm = 0.0;
  double max_off_support = 0.0;
  DecayFit decay;
  std::optional<SupportMargins> margins;
  int iterations = 0;
  bool converged = false;
  std::string status;
  double kappa_used = 0.0;
  double ansatz_remainder = 0.0;
};

// Max |alpha_{jl}| over support modes outside |j|_1 <= 2.
double off_support_leakage(const ControlSignal& s);

struct LinearSteering {
  ControlSignal zeta;
  Eigen::VectorXd v1;
  Vec2 z1 = Vec2::Zero();
  double v_error = 0.0;
  double z_error = 0.0;
};

// Linearized steering along the base interval (s, forcing): returns zeta with
// v(1) = v_hat and |z(1) - q_hat| = O(delta).
LinearSteering steer_linearized(const SystemState& s, const ControlSignal& forcing, const FourierField& v_hat,
                                const Vec2& q_hat, double delta, const FlowParams& fp);

struct DampingResult {
  ControlSignal control;
  double achieved = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct DampingOptions {
  int time_modes = 64;
  int window_modes = 8;
  double margin = 0.05;  // time support [margin, 1/2 - margin]
  double ridge = 1e-8;
  int substeps = 32;
};

// Gauss-Newton shooting on [0, 1/2] for ||u(1/2)||_s <= kappa_target using
// smooth windowed controls on the |j|_1 <= 2 modes.
DampingResult damp_velocity_control(const SystemState& s, double kappa_target, int sobolev_s, int budget,
                                    const FlowParams& fp, const DampingOptions& opts = {});

class SteeringDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FixpointOptions {
  double kappa = 0.05;
  int max_iterations = 100;
  double tolerance = 1e-8;
  double damping = 0.5;
  int damp_budget = 200;
  // Step window of the transport phase inside [1/2, 1].
  double transport_t0 = 0.5;
  double transport_t1 = 1.0;
  DampingOptions damping_opts;
};

struct ExactSteering {
  ControlSignal control;
  SteeringReport report;
  Vec2 fixed_point = Vec2::Zero();
};

// Two-phase control (damping on [0, 1/2], transport on [1/2, 1]) expressed in
// the noise index set, with the transport target solved by damped Picard
// iteration so that the particle lands on p_hat.
ExactSteering exact_steer_fixpoint(const SystemState& s, const Vec2& p_hat, const NoiseSpec& spec,
                                   const FlowParams& fp, const FixpointOptions& opts = {});

}  // namespace lagranflow
