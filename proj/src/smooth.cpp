#include "lagranflow/smooth.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace lagranflow {

namespace {

struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

const GaussRule& rule() {
  static const GaussRule r = [] {
    const int n = 24;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule g;
    for (int k = 0; k < n; ++k) {
      g.x.push_back(0.5 * (es.eigenvalues()[k] + 1.0));
      g.w.push_back(es.eigenvectors()(0, k) * es.eigenvectors()(0, k));
    }
    return g;
  }();
  return r;
}

double bump(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::exp(-1.0 / (x * (1.0 - x)));
}

// Integral of the bump over [0, x] for x <= 1/2, on geometric panels that
// resolve the flat start.
double raw_integral(double x) {
  if (x <= 0.0) return 0.0;
  const GaussRule& g = rule();
  double acc = 0.0;
  double hi = x;
  for (int p = 0; p < 8 && hi > 1e-3; ++p) {
    const double lo = hi * 0.5;
    for (size_t k = 0; k < g.x.size(); ++k) acc += g.w[k] * (hi - lo) * bump(lo + (hi - lo) * g.x[k]);
    hi = lo;
  }
  return acc;
}

double total() {
  static const double z = 2.0 * raw_integral(0.5);
  return z;
}

}  // namespace

std::array<double, 4> bump_jet(double x) {
  if (x <= 0.0 || x >= 1.0) return {0.0, 0.0, 0.0, 0.0};
  const double q = x * (1.0 - x), q1 = 1.0 - 2.0 * x, q2 = -2.0;
  const double b = std::exp(-1.0 / q);
  const double w1 = q1 / (q * q);
  const double w2 = q2 / (q * q) - 2.0 * q1 * q1 / (q * q * q);
  const double w3 = -6.0 * q1 * q2 / (q * q * q) + 6.0 * q1 * q1 * q1 / (q * q * q * q);
  return {b, w1 * b, (w2 + w1 * w1) * b, (w3 + 3.0 * w1 * w2 + w1 * w1 * w1) * b};
}

double bump_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x <= 0.5) return raw_integral(x) / total();
  return 1.0 - raw_integral(1.0 - x) / total();
}

SmoothStep::SmoothStep(double t0, double t1) : t0_(t0), t1_(t1) {
  if (!(t1 > t0)) throw std::invalid_argument("smooth step needs t1 > t0");
}

std::array<double, 4> SmoothStep::jet(double t) const {
  const double w = t1_ - t0_;
  const double x = (t - t0_) / w;
  if (x <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  if (x >= 1.0) return {1.0, 0.0, 0.0, 0.0};
  const auto b = bump_jet(x);
  const double z = total();
  return {bump_cdf(x), b[0] / (z * w), b[1] / (z * w * w), b[2] / (z * w * w * w)};
}

}  // namespace lagranflow
