#pragma once

#include <array>

namespace lagranflow {

// C-infinity step: 0 for t <= t0, 1 for t >= t1, built from the normalized
// integral of exp(-1/(x(1-x))).
class SmoothStep {
 public:
  SmoothStep(double t0, double t1);

  double t0() const { return t0_; }
  double t1() const { return t1_; }

  // Value and first three time derivatives.
  std::array<double, 4> jet(double t) const;
  double operator()(double t) const { return jet(t)[0]; }

 private:
  double t0_;
  double t1_;
};

// exp(-1/(x(1-x))) on (0,1) and its first three derivatives.
std::array<double, 4> bump_jet(double x);
// Normalized integral of the bump from 0 to x.
double bump_cdf(double x);

}  // namespace lagranflow
