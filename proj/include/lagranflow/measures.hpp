#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lagranflow/dynamics.hpp"

namespace lagranflow {

// 16 hex digits identifying the noise and flow parameters.
std::string spec_fingerprint(const NoiseSpec& spec, const FlowParams& fp);

// n particle paths (y_1 .. y_t); row i holds y_1 then y_2 ... (2t columns).
struct ParticleSamples {
  int t = 1;
  Eigen::MatrixXd y;
  SystemState initial;
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::uint64_t stream_offset = 0;

  int n() const { return static_cast<int>(y.rows()); }
};

// Path i uses kick stream stream_offset + i, so n = 1 reproduces run_chain.
ParticleSamples run_ensemble(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp, int t, int n,
                             std::uint64_t seed, int workers = 0, std::uint64_t stream_offset = 0);

// Windows (y_{k+1} .. y_{k+t}) for k = burn_in .. burn_in + count - 1 of one chain.
ParticleSamples stationary_windows(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp, int t,
                                   int count, int burn_in, std::uint64_t seed, std::uint64_t stream_index = 0);

enum class DensityMethod { kHistogram, kKde };

struct DensityOptions {
  DensityMethod method = DensityMethod::kHistogram;
  int bins = 8;          // histogram cells per coordinate
  int grid = 16;         // KDE evaluation points per coordinate
  double bandwidth = 0;  // KDE; 0 selects n^{-1/(2t+4)}
};

// Density with respect to normalized Lebesgue measure on T^{2t}, on a
// row-major grid (first coordinate slowest). Histogram values are cell
// averages; KDE values are point values at (i + 1/2) 2 pi / grid.
struct DensityEstimate {
  DensityMethod method = DensityMethod::kHistogram;
  int t = 1;
  int resolution = 0;
  int n = 0;
  double bandwidth = 0.0;
  double normalization = 1.0;  // KDE: factor making the grid quadrature 1
  Eigen::VectorXd values;
  Eigen::VectorXd std_errors;
  Eigen::VectorXi counts;  // histogram only
  bool under_resolved = false;
  Eigen::MatrixXd samples;  // KDE only, for point evaluation

  int dimension() const { return 2 * t; }
  int cells() const { return static_cast<int>(values.size()); }
  // Quadrature of the estimate on its own grid.
  double integral() const { return values.mean(); }
  int cell_of(const Eigen::VectorXd& point) const;
  Eigen::VectorXd cell_center(int index) const;
  double at(const Eigen::VectorXd& point) const;
};

DensityEstimate estimate_density(const ParticleSamples& samples, const DensityOptions& opts = {});

struct DensityExtrema {
  double m_hat = 0.0;
  double M_hat = 0.0;
  // Simultaneous Clopper-Pearson bands over every (state, cell).
  double m_lower = 0.0;
  double m_upper = 0.0;
  double M_lower = 0.0;
  double M_upper = 0.0;
  int argmin_state = 0, argmin_cell = 0;
  int argmax_state = 0, argmax_cell = 0;
  double confidence = 0.95;
  bool under_resolved = false;
  std::vector<DensityEstimate> estimates;

  bool positive() const { return m_lower > 0.0; }
};

// One-step particle densities from each state on a bins x bins grid.
DensityExtrema density_extrema(const NoiseSpec& spec, const FlowParams& fp, const std::vector<SystemState>& states,
                               int bins, int n_per_state, std::uint64_t seed, int workers = 0, double alpha = 0.05);

// Clopper-Pearson interval for a binomial proportion.
std::pair<double, double> clopper_pearson(int successes, int trials, double alpha);

class UndefinedEntropyProduction : public std::domain_error {
 public:
  UndefinedEntropyProduction(const Eigen::VectorXd& ordering);
  const Eigen::VectorXd& ordering() const { return ordering_; }

 private:
  Eigen::VectorXd ordering_;
};

// The path with its t points in reverse order.
Eigen::VectorXd reversed_path(const Eigen::VectorXd& path);

// sigma_t = log rho_t(y_1 .. y_t) - log rho_t(y_t .. y_1).
double entropy_production(const DensityEstimate& rho, const Eigen::VectorXd& path);

struct EpBoundCheck {
  double bound = 0.0;  // log(M / m)
  double slack = 0.0;
  int paths = 0;
  int within = 0;
  int undefined = 0;
  double max_abs = 0.0;  // max |sigma_t / t|
  std::vector<double> sigma;

  double fraction() const { return paths > 0 ? static_cast<double>(within) / paths : 0.0; }
};

double ep_bound(double m_hat, double M_hat);
// Paths with an undefined sigma count as outside the bound.
EpBoundCheck ep_bound_check(const DensityEstimate& rho, const ParticleSamples& paths, double m_hat, double M_hat,
                            double slack);

struct StationarityOptions {
  int burn_in = 50;
  int horizon = 100000;
  int bins = 8;
  int harmonic_radius = 3;
  int batches = 100;
  std::uint64_t seed = 1;
  std::uint64_t stream_index = 0;
};

struct StationarityReport {
  int n = 0;
  Eigen::VectorXi counts;
  double chi_square = 0.0;
  int dof = 0;
  double p_value = 0.0;
  // Batch-means variance inflation of the cell indicators and the p-value of
  // chi_square / inflation.
  double inflation = 1.0;
  double p_value_corrected = 0.0;
  std::vector<Mode> harmonics;  // 1 <= |m|_inf <= radius, one of each +-m pair
  std::vector<double> harmonic_abs;
  double harmonic_bound = 0.0;  // 4 / sqrt(n)
  double max_harmonic = 0.0;
  std::vector<double> energy_correlation;  // corr(||u||^2, cos and sin of <m, y>)
  double correlation_bound = 0.0;          // 3 / sqrt(n)
  double max_correlation = 0.0;

  bool rejected(double level = 0.01) const { return p_value < level; }
  bool harmonics_ok() const { return max_harmonic <= harmonic_bound; }
};

StationarityReport stationarity_report(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp,
                                       const StationarityOptions& opts);
StationarityReport stationarity_from_samples(const std::vector<Vec2>& y, const std::vector<double>& energy,
                                             const StationarityOptions& opts);

struct ConvergenceOptions {
  int t = 1;
  std::vector<int> windows{1, 2, 4, 8};
  int reference_window = 30;
  int trajectories = 10000;
  int bins = 8;
  int workers = 0;
  std::uint64_t seed = 1;
};

struct ConvergenceReport {
  std::vector<int> windows;
  // Sup-norm distance of the window-n estimate to the pooled long-run one,
  // max over initial states, and its 3 sigma noise floor.
  std::vector<double> discrepancy;
  std::vector<double> noise_floor;
  std::vector<int> fit_windows;
  double rate = 0.0;
  double rate_lower = 0.0;
  double rate_upper = 0.0;
  bool inconclusive = true;
  std::string message;
};

// Densities of (y_{n+1} .. y_{n+t}) for n in `windows`.
ConvergenceReport convergence_report(const NoiseSpec& spec, const FlowParams& fp,
                                     const std::vector<SystemState>& states, const ConvergenceOptions& opts);

// Sup-norm distance of two histogram estimates on the same grid and the
// 3 sigma floor built from their standard errors.
std::pair<double, double> sup_discrepancy(const DensityEstimate& a, const DensityEstimate& b);

// Empirical measure over length-r windows of a trajectory; each state is
// summarized by (energy, enstrophy, y1, y2).
struct EmpiricalMeasure {
  int r = 1;
  std::vector<std::string> features;
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
};
EmpiricalMeasure empirical_measure(const Trajectory& tr, int r);

}  // namespace lagranflow
