#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lagranflow/noise.hpp"
#include "lagranflow/signal.hpp"
#include "lagranflow/spectral.hpp"

namespace lagranflow {

class IntegrationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Vec2 wrap_point(const Vec2& y);
// Minimal lift of b - a componentwise into [-pi, pi); ties at pi go positive.
Vec2 torus_delta(const Vec2& a, const Vec2& b, bool* tie = nullptr);
double torus_distance(const Vec2& a, const Vec2& b);

struct SystemState {
  FourierField u;
  Vec2 y = Vec2::Zero();

  static SystemState rest(int cutoff, const Vec2& p) { return {FourierField(cutoff), wrap_point(p)}; }
};

struct FlowParams {
  double nu = 0.1;
  int substeps = 64;
};

// Stage states of every substep of one integration interval.
struct DenseRecord {
  int cutoff = 0;
  double t0 = 0.0;
  double t1 = 1.0;
  int substeps = 0;
  // stage_u[s][n], s = 0..3: u_n and the three intermediate stage states.
  std::array<std::vector<Eigen::VectorXd>, 4> stage_u;
  std::array<std::vector<Vec2>, 4> stage_y;
};

struct TangentState {
  FourierField v;
  Vec2 z = Vec2::Zero();
};

// Columns of v (M x c) and z (2 x c) are independent tangent directions.
struct TangentBatch {
  Eigen::MatrixXd v;
  Eigen::MatrixXd z;
};

struct Trajectory {
  std::vector<SystemState> states;
  std::vector<KickRealization> kicks;
  std::vector<DenseRecord> records;
};

struct ChainOptions {
  bool keep_kicks = false;
  bool keep_records = false;
  std::uint64_t stream_index = 0;
};

// Coupled Galerkin + particle system integrated over [t0, t1] by
// integrating-factor RK4 with the particle advanced from the stage fields.
SystemState integrate(const SystemState& s, const ControlSignal& forcing, const FlowParams& fp,
                      double t0, double t1, int substeps, DenseRecord* record = nullptr);

SystemState step_map(const SystemState& s, const ControlSignal& forcing, const FlowParams& fp,
                     DenseRecord* record = nullptr);
SystemState step_map(const SystemState& s, const KickRealization& kick, const NoiseSpec& spec,
                     const FlowParams& fp, DenseRecord* record = nullptr);

Trajectory run_chain(const SystemState& s0, const NoiseSpec& spec, const FlowParams& fp,
                     std::uint64_t seed, int K, const ChainOptions& opts = {});

// Tangent-linear model of the discrete scheme along a recorded interval:
// initial directions `init` plus forcing perturbations (one per column; a
// null entry means no forcing perturbation for that column).
TangentBatch linearized_batch(const DenseRecord& record, const FlowParams& fp, const TangentBatch& init,
                              const std::vector<const ControlSignal*>& zetas);

TangentState linearized_map(const SystemState& s, const ControlSignal& forcing, const ControlSignal& zeta,
                            const FlowParams& fp);

// Rows: field coefficients then the two particle rows; one column per control.
Eigen::MatrixXd jacobian_matrix(const SystemState& s, const ControlSignal& forcing,
                                const std::vector<ControlSignal>& basis, const FlowParams& fp);
Eigen::MatrixXd jacobian_matrix(const DenseRecord& record, const FlowParams& fp,
                                const std::vector<ControlSignal>& basis);

// D_state S applied to the columns of `directions` ((M+2) x c).
Eigen::MatrixXd state_derivative(const DenseRecord& record, const FlowParams& fp,
                                 const Eigen::MatrixXd& directions);

double energy(const FourierField& u);
double enstrophy(const FourierField& u);

}  // namespace lagranflow
