#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lagranflow/rng.hpp"
#include "lagranflow/signal.hpp"

namespace lagranflow {

struct NoiseSpec {
  int spatial_cutoff = 8;
  int time_modes = 16;
  double kappa = 0.5;
  double beta = 1.0;
  double c0 = 1.0;
  double delta = 0.5;
  double amplification = 1.0;
  int sobolev_s = 3;
  std::string density = "bump";

  // Throws std::invalid_argument naming the offending key.
  void validate() const;

  double b(const Mode& j) const { return std::exp(-kappa * j.norm()); }
  double c(int l) const { return c0 * std::pow(double(l), -beta); }
  double amp(const Mode& j) const { return j.l1() <= 2 ? amplification : 1.0; }
  // e_j-coefficient of the kick per unit xi: a_j b_j c_l.
  double scale(const Mode& j, int l) const { return amp(j) * b(j) * c(l); }
  // d_j = |j|^{-s}.
  double d(const Mode& j) const { return std::pow(j.norm(), -double(sobolev_s)); }
  // Radius of positivity of the phi_{lj}-coordinate of the kick.
  double positivity_radius(const Mode& j, int l) const { return scale(j, l) * delta / d(j); }
};

// Unnormalized bump density exp(-1/(1-r^2)) on (-1, 1).
double bump_density(double r);
double bump_log_density(double r);
double sample_bump(CounterRng& rng);

struct KickRealization {
  int spatial_cutoff = 0;
  // xi(i, l-1) for mode i in canonical order.
  Eigen::MatrixXd xi;

  ControlSignal to_signal(const NoiseSpec& spec) const;
};

// Draws xi mode by mode (canonical order), l = 1..L within each mode.
KickRealization sample_kick(const NoiseSpec& spec, CounterRng& rng);

// The kick whose assembled forcing equals the given spectral signal; entries
// outside the noise index set are ignored.
KickRealization kick_from_signal(const NoiseSpec& spec, const ControlSignal& signal);

// <signal, phi_{lj}> in L2(0,1; V^s) with phi_{lj} = d_j psi_l e_j.
double kick_inner_product(const NoiseSpec& spec, const ControlSignal& signal, int l, const Mode& j);

struct SupportMargins {
  // margins(i, l-1) = delta_{lj} - |<signal, phi_{lj}>| in canonical mode order.
  Eigen::MatrixXd margins;
  double min_margin = 0.0;
  // Norm in L2(0,1; V^s) of the part of the signal outside the noise index set.
  double remainder_norm = 0.0;
  bool membership = false;
  // Smallest amplification closing all margins (infinite if an unamplified
  // coordinate fails or a remainder exists).
  double required_amplification = 1.0;
};

SupportMargins support_margins(const NoiseSpec& spec, const ControlSignal& signal);

struct PoincareDecay {
  std::vector<int> cutoffs;
  std::vector<double> tail_norms;
  double slope = 0.0;
  bool super_fast = false;
  bool periodic_warning = false;
  double norm = 0.0;

  bool satisfies(int r, double theta = 1.0) const {
    return super_fast || slope <= -theta * r + 0.25;
  }
};

// ||Q_N g|| where Q_N projects onto span{psi_l : l >= N}.
double poincare_tail(const std::function<double(double)>& g, int N);
PoincareDecay poincare_decay(const std::function<double(double)>& g, int r);

}  // namespace lagranflow
