#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lagranflow {

class ChainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-stochastic transition matrix on {0, .., d-1}.
class FiniteChain {
 public:
  explicit FiniteChain(Eigen::MatrixXd P);

  int size() const { return static_cast<int>(P_.rows()); }
  const Eigen::MatrixXd& P() const { return P_; }
  bool positive() const { return positive_; }

  // Empty when every state reaches every other; otherwise "i cannot reach j".
  std::string reachability_failure() const;
  void require_irreducible() const;
  void require_positive() const;

  // Unique stationary probability vector (irreducible chains).
  Eigen::VectorXd stationary() const;

 private:
  Eigen::MatrixXd P_;
  bool positive_ = false;
};

// Perron root and eigenvectors of a nonnegative matrix (dense solve for small
// matrices, shifted power iteration otherwise);
// `right` and `left` are normalized by sum(left) = 1, <left, right> = 1.
struct PerronResult {
  double root = 0.0;
  double log_root = 0.0;
  Eigen::VectorXd right;
  Eigen::VectorXd left;
  int iterations = 0;
  bool converged = false;
};
PerronResult perron(const Eigen::MatrixXd& M, double tol = 1e-13, int max_iterations = 1000000,
                    const Eigen::VectorXd* warm_right = nullptr, const Eigen::VectorXd* warm_left = nullptr);

// Matrix with entries P(x, y) exp(V(y)).
Eigen::MatrixXd tilted_matrix(const FiniteChain& chain, const Eigen::VectorXd& V);

// Q(V) = log spectral radius of the tilted matrix.
double tilted_pressure(const FiniteChain& chain, const Eigen::VectorXd& V);

struct EigenTriple {
  double lambda = 0.0;
  Eigen::VectorXd h;   // right eigenvector, <h, mu> = 1
  Eigen::VectorXd mu;  // left eigenvector, probability vector
  double certificate = 0.0;  // max over test functions of sup |lambda^-k P_k f - <f, mu> h|
  int certificate_steps = 0;
};
EigenTriple fk_eigentriple(const FiniteChain& chain, const Eigen::VectorXd& V, std::uint64_t seed = 1);

// Twisted Markov kernel P(x, y) e^{V(y)} h(y) / (lambda h(x)).
Eigen::MatrixXd twisted_kernel(const FiniteChain& chain, const EigenTriple& t, const Eigen::VectorXd& V);

// sigma_V = h mu / <h, mu>.
Eigen::VectorXd equilibrium_state(const FiniteChain& chain, const Eigen::VectorXd& V);

struct Level2Result {
  double method_a = 0.0;  // sup over g of sum nu log(g / Pg)
  double method_b = 0.0;  // sup over V of <V, nu> - Q(V)
  double discrepancy = 0.0;
  bool flagged = false;
  double value() const { return method_b; }
};
Level2Result dv_rate_level2(const FiniteChain& chain, const Eigen::VectorXd& nu, int restarts = 20,
                            std::uint64_t seed = 7);

// Legendre transform only (method B).
double legendre_rate(const FiniteChain& chain, const Eigen::VectorXd& nu);

struct RateFunctionReport {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> values_a;
  std::vector<double> values_b;
  double max_discrepancy = 0.0;
};
RateFunctionReport rate_function_report(const FiniteChain& chain, const std::vector<Eigen::VectorXd>& points);

// Stationary r-step Markov measure: marginal on words of length r (base-d
// index, first letter most significant) and next-letter kernels.
struct MarkovMeasure {
  int d = 0;
  int r = 1;
  Eigen::VectorXd marginal;
  Eigen::MatrixXd kernel;  // d^r x d

  // Probability of a word (shorter words are marginalized).
  double word_probability(const std::vector<int>& w) const;
  double shift_residual() const;
  // The chain's own path measure with the given order.
  static MarkovMeasure of_chain(const FiniteChain& chain, int r = 1);
  // nu^{\otimes Z} written with r = 1.
  static MarkovMeasure product(const Eigen::VectorXd& nu);
  // Marginal pi with kernel K (r = 1); pi must be K-stationary.
  static MarkovMeasure first_order(const Eigen::VectorXd& pi, const Eigen::MatrixXd& K);
  // Time reversal of a first-order measure.
  MarkovMeasure reversed() const;
};

struct Level3Result {
  double value = 0.0;       // entropy formula
  double dual_value = 0.0;  // word-chain Legendre dual
  double discrepancy = 0.0;
  double shift_residual = 0.0;
  bool infinite = false;
};
Level3Result dv_rate_level3(const FiniteChain& chain, const MarkovMeasure& lambda);

// sum over words w of length n of lambda(w) KL(lambda(. | w) || P(w_last, .)):
// nondecreasing in n, equal to the level-3 rate for n >= r when lambda is
// r-step Markov.
double level3_rate_truncated(const FiniteChain& chain,
                             const std::function<double(const std::vector<int>&)>& word_probability, int n);

// Word chain on X^k: (x_0 .. x_{k-1}) -> (x_1 .. x_{k-1}, b) with P(x_{k-1}, b).
FiniteChain word_chain(const FiniteChain& chain, int k);

// sigma(x, y) = log P(x, y) / P(y, x).
Eigen::MatrixXd entropy_production_matrix(const FiniteChain& chain);

// Gartner-Ellis pressure of the time-averaged entropy production and its rate.
class EntropyProductionRate {
 public:
  explicit EntropyProductionRate(const FiniteChain& chain);

  double pressure(double s) const;
  double pressure_derivative(double s) const;
  double mean() const;
  // Closed domain [r_min, r_max] (extreme cycle means of sigma).
  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  // +infinity outside the domain.
  double rate(double r) const;

 private:
  Eigen::MatrixXd logP_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd pi_;
  double r_min_ = 0.0;
  double r_max_ = 0.0;
};

// Minimum and maximum mean weight over the cycles of the graph {P > 0}.
std::pair<double, double> cycle_mean_range(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& P);

struct GcReport {
  std::vector<double> r;
  std::vector<double> rate_pos;
  std::vector<double> rate_neg;
  double max_residual = 0.0;  // max |I(-r) - I(r) - r| over finite points
  int finite_points = 0;
  double mean_ep = 0.0;
  double mean_ep_derivative = 0.0;
  double r_min = 0.0;
  double r_max = 0.0;
  double level3_max_residual = 0.0;
  int level3_samples = 0;
};
GcReport gc_symmetry_check(const FiniteChain& chain, const std::vector<double>& r_grid, int level3_samples = 20,
                           std::uint64_t seed = 11);

struct EquilibriumCheck {
  Eigen::VectorXd state;
  double identity_residual = 0.0;  // |<V, s> - I(s) - Q(V)|
  double self_rate = 0.0;          // I_V(s)
  double min_other_rate = 0.0;     // min of I_V over random other measures
};
EquilibriumCheck check_equilibrium(const FiniteChain& chain, const Eigen::VectorXd& V, int others = 50,
                                   std::uint64_t seed = 13);

// Random chains for tests and the CLI.
FiniteChain random_positive_chain(int d, std::uint64_t seed, double floor = 0.02);
Eigen::VectorXd random_probability(int d, std::uint64_t seed, double floor = 0.0);

}  // namespace lagranflow
