#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

namespace lagranflow {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Mode {
  int j1 = 0;
  int j2 = 0;

  bool positive() const { return j1 > 0 || (j1 == 0 && j2 > 0); }
  int l1() const { return std::abs(j1) + std::abs(j2); }
  int linf() const { return std::max(std::abs(j1), std::abs(j2)); }
  double norm() const { return std::sqrt(double(j1) * j1 + double(j2) * j2); }
  double norm2() const { return double(j1) * j1 + double(j2) * j2; }
  Vec2 perp() const { return Vec2(-j2, j1); }
  Mode operator-() const { return {-j1, -j2}; }
  bool operator==(const Mode& o) const { return j1 == o.j1 && j2 == o.j2; }
  bool operator!=(const Mode& o) const { return !(*this == o); }
};

// Canonical ordering: by |j|_1, then j1, then j2.
bool canonical_less(const Mode& a, const Mode& b);

// Normalization constant of e_j, equal to sqrt(2) * pi * |j|.
inline double basis_norm(const Mode& j) { return std::sqrt(2.0) * kPi * j.norm(); }

// All j != 0 with |j|_inf <= N, in canonical order. Shared instances are
// cached per cutoff.
class ModeSet {
 public:
  static std::shared_ptr<const ModeSet> get(int cutoff);

  int cutoff() const { return cutoff_; }
  int size() const { return static_cast<int>(modes_.size()); }
  const Mode& operator[](int i) const { return modes_[i]; }
  const std::vector<Mode>& modes() const { return modes_; }
  // Index of j, or -1 if j is outside the cutoff (or zero).
  int index(const Mode& j) const;
  // Index of -j for the mode at position i.
  int partner(int i) const { return partner_[i]; }

 private:
  explicit ModeSet(int cutoff);
  int cutoff_;
  std::vector<Mode> modes_;
  std::vector<int> lookup_;
  std::vector<int> partner_;
};

// Divergence-free field on the torus in the real basis {e_j}.
class FourierField {
 public:
  FourierField() = default;
  explicit FourierField(int cutoff);
  FourierField(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd coeffs);

  int cutoff() const { return modes_ ? modes_->cutoff() : 0; }
  int size() const { return modes_ ? modes_->size() : 0; }
  const ModeSet& modes() const { return *modes_; }
  std::shared_ptr<const ModeSet> mode_set() const { return modes_; }

  // Coefficient of e_j; exactly zero outside the cutoff.
  double coeff(const Mode& j) const;
  void set_coeff(const Mode& j, double value);

  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  Eigen::VectorXd& coeffs() { return coeffs_; }

  // Copy with a different cutoff (truncating or zero-padding).
  FourierField with_cutoff(int cutoff) const;

 private:
  std::shared_ptr<const ModeSet> modes_;
  Eigen::VectorXd coeffs_;
};

double sobolev_norm(const FourierField& u, double s);
double sobolev_norm(const ModeSet& modes, const Eigen::VectorXd& u, double s);

// Pointwise values. The point is wrapped mod 2*pi.
Vec2 eval_field(const FourierField& u, const Vec2& x);
// Returns the velocity and the matrix G with G(b, a) = d_a u_b.
void eval_field_jet(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& x,
                    Vec2* value, Mat2* grad);
// Second derivatives: hess[b](a, c) = d_a d_c u_b.
void eval_field_hessian(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& x,
                        std::array<Mat2, 2>* hess);
// Row b of the returned 2 x M matrix evaluates component b of a field at x.
Eigen::Matrix<double, 2, Eigen::Dynamic> evaluation_rows(const ModeSet& modes, const Vec2& x);

// Translation x -> x - c applied to the coefficients (u(. - c)).
Eigen::VectorXd translate_coeffs(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& c);

// Scalar trig functions phi_j: cos<j,x> for positive j, sin<j,x> otherwise.
double trig_branch(const Mode& j, const Vec2& x);

// General (not necessarily solenoidal) vector field
// f(x) = constant + sum_j F_j phi_j(x).
struct VectorTrigExpansion {
  Vec2 constant = Vec2::Zero();
  std::vector<std::pair<Mode, Vec2>> terms;

  Vec2 eval(const Vec2& x) const;
  // Gradient of a scalar trig polynomial sum_j g_j phi_j.
  static VectorTrigExpansion gradient(const std::vector<std::pair<Mode, double>>& scalar);
};

// Leray projection onto divergence-free, mean-zero fields, truncated to the cutoff.
FourierField leray_project(const VectorTrigExpansion& f, int cutoff);

// Exact Galerkin quadratic term B(u)_m = sum T_mkl u_k u_l, stored with the
// (k, l) and (l, k) contributions merged (k <= l).
class TriadTable {
 public:
  struct Entry {
    int m;
    int k;
    int l;
    double coef;
  };

  static std::shared_ptr<const TriadTable> get(int cutoff);

  // Unsymmetrized coefficient T_mkl = (e_k . grad e_l, e_m).
  static double coefficient(const Mode& m, const Mode& k, const Mode& l);

  const ModeSet& modes() const { return *modes_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void apply(const Eigen::VectorXd& u, Eigen::VectorXd* out) const;
  // Directional derivative of B at u along v.
  void apply_derivative(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                        Eigen::VectorXd* out) const;
  // Dense Jacobian of B at u.
  void jacobian(const Eigen::VectorXd& u, Eigen::MatrixXd* out) const;

 private:
  explicit TriadTable(int cutoff);
  std::shared_ptr<const ModeSet> modes_;
  std::vector<Entry> entries_;
};

FourierField nonlinear_term(const FourierField& u);

}  // namespace lagranflow
