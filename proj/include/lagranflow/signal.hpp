#pragma once

#include <vector>

#include "lagranflow/spectral.hpp"

namespace lagranflow {

// psi_1 = 1, psi_{2m} = sqrt(2) cos(2 pi m t), psi_{2m+1} = sqrt(2) sin(2 pi m t).
double time_basis(int l, double t);
// Values psi_1(t) .. psi_L(t).
Eigen::VectorXd time_basis_values(int L, double t);

// Deterministic forcing eta(t) = sum_{j in support} alpha_j(t) e_j.
//
// Spectral signals store alpha_{jl} over psi_l. Nodal signals store alpha_j at
// equispaced nodes on [0, 1] and interpolate with local cubics; they are used
// for controls synthesized along a sampled base trajectory.
class ControlSignal {
 public:
  enum class Kind { kSpectral, kNodal };

  ControlSignal() = default;
  // coeffs(i, l-1) = alpha_{support[i], l}.
  ControlSignal(std::vector<Mode> support, Eigen::MatrixXd coeffs);
  // values(i, k) = alpha_{support[i]}(k / (values.cols() - 1)).
  static ControlSignal nodal(std::vector<Mode> support, Eigen::MatrixXd values);

  Kind kind() const { return kind_; }
  bool empty() const { return support_.empty(); }
  const std::vector<Mode>& support() const { return support_; }
  int time_modes() const { return kind_ == Kind::kSpectral ? static_cast<int>(data_.cols()) : 0; }
  int node_count() const { return kind_ == Kind::kNodal ? static_cast<int>(data_.cols()) : 0; }
  const Eigen::MatrixXd& data() const { return data_; }
  Eigen::MatrixXd& data() { return data_; }

  // alpha_{jl}; zero when j is not in the support or l is out of range.
  double coeff(const Mode& j, int l) const;
  int support_index(const Mode& j) const;

  // alpha_j(t) for every support mode.
  Eigen::VectorXd eval(double t) const;
  // Column k holds eval(times[k]).
  Eigen::MatrixXd sample(const std::vector<double>& times) const;
  FourierField field_at(double t, int cutoff) const;

  // Spectral expansion with L time modes (nodal signals are projected by
  // quadrature; spectral ones are truncated or padded).
  ControlSignal to_spectral(int L) const;

  // Linear combinations; supports are merged.
  ControlSignal operator+(const ControlSignal& o) const;
  ControlSignal operator-(const ControlSignal& o) const { return *this + o * -1.0; }
  ControlSignal operator*(double s) const;

  // Supremum over the sampled time grid of the L2 norm of eta(t).
  double sup_norm(int samples = 257) const;
  // L2(0,1; L2) norm (spectral: exact; nodal: quadrature).
  double l2_norm() const;

  // Translate in space: eta(t, x - c).
  ControlSignal translated(const Vec2& c) const;

 private:
  Kind kind_ = Kind::kSpectral;
  std::vector<Mode> support_;
  Eigen::MatrixXd data_;
};

// Projection of a scalar function onto psi_1..psi_L by periodic trapezoid
// quadrature with Q nodes (spectrally accurate for smooth periodic g).
Eigen::VectorXd project_time_basis(const std::vector<double>& samples_on_uniform_grid, int L);

}  // namespace lagranflow
