#include "lagranflow/signal.hpp"

#include <stdexcept>

namespace lagranflow {

double time_basis(int l, double t) {
  if (l < 1) throw std::invalid_argument("time basis index must be >= 1");
  if (l == 1) return 1.0;
  const int m = l / 2;
  const double th = kTwoPi * m * t;
  return std::sqrt(2.0) * (l % 2 == 0 ? std::cos(th) : std::sin(th));
}

Eigen::VectorXd time_basis_values(int L, double t) {
  Eigen::VectorXd out(L);
  if (L == 0) return out;
  out[0] = 1.0;
  const double r2 = std::sqrt(2.0);
  const double th = kTwoPi * t;
  const double c1 = std::cos(th), s1 = std::sin(th);
  double c = 1.0, s = 0.0;
  for (int m = 1; 2 * m <= L; ++m) {
    if (m % 32 == 0) {
      c = std::cos(th * m);
      s = std::sin(th * m);
    } else {
      const double cn = c * c1 - s * s1;
      s = s * c1 + c * s1;
      c = cn;
    }
    out[2 * m - 1] = r2 * c;
    if (2 * m + 1 <= L) out[2 * m] = r2 * s;
  }
  return out;
}

Eigen::VectorXd project_time_basis(const std::vector<double>& samples, int L) {
  const int q = static_cast<int>(samples.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(L);
  for (int k = 0; k < q; ++k) out += samples[k] * time_basis_values(L, double(k) / q);
  return out / q;
}

ControlSignal::ControlSignal(std::vector<Mode> support, Eigen::MatrixXd coeffs)
    : kind_(Kind::kSpectral), support_(std::move(support)), data_(std::move(coeffs)) {
  if (data_.rows() != static_cast<Eigen::Index>(support_.size()))
    throw std::invalid_argument("control coefficients do not match support size");
}

ControlSignal ControlSignal::nodal(std::vector<Mode> support, Eigen::MatrixXd values) {
  if (values.rows() != static_cast<Eigen::Index>(support.size()))
    throw std::invalid_argument("control values do not match support size");
  if (values.cols() < 4) throw std::invalid_argument("nodal control needs at least 4 nodes");
  ControlSignal s;
  s.kind_ = Kind::kNodal;
  s.support_ = std::move(support);
  s.data_ = std::move(values);
  return s;
}

int ControlSignal::support_index(const Mode& j) const {
  for (size_t i = 0; i < support_.size(); ++i)
    if (support_[i] == j) return static_cast<int>(i);
  return -1;
}

double ControlSignal::coeff(const Mode& j, int l) const {
  if (kind_ != Kind::kSpectral) return to_spectral(std::max(l, 1)).coeff(j, l);
  const int i = support_index(j);
  if (i < 0 || l < 1 || l > data_.cols()) return 0.0;
  return data_(i, l - 1);
}

Eigen::VectorXd ControlSignal::eval(double t) const {
  if (support_.empty()) return Eigen::VectorXd();
  if (kind_ == Kind::kSpectral) return data_ * time_basis_values(static_cast<int>(data_.cols()), t);
  const int n = static_cast<int>(data_.cols());
  const double H = 1.0 / (n - 1);
  const double x = std::clamp(t, 0.0, 1.0) / H;
  int k = static_cast<int>(std::floor(x));
  if (k >= n - 1) return data_.col(n - 1);
  if (std::abs(x - k) < 1e-12) return data_.col(k);
  int start = std::clamp(k - 1, 0, n - 4);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(data_.rows());
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) w *= (x - (start + b)) / double(a - b);
    out += w * data_.col(start + a);
  }
  return out;
}

Eigen::MatrixXd ControlSignal::sample(const std::vector<double>& times) const {
  Eigen::MatrixXd out(support_.size(), times.size());
  for (size_t k = 0; k < times.size(); ++k) out.col(k) = eval(times[k]);
  return out;
}

FourierField ControlSignal::field_at(double t, int cutoff) const {
  FourierField f(cutoff);
  if (support_.empty()) return f;
  const Eigen::VectorXd v = eval(t);
  for (size_t i = 0; i < support_.size(); ++i) {
    const int idx = f.modes().index(support_[i]);
    if (idx >= 0) f.coeffs()[idx] += v[i];
  }
  return f;
}

ControlSignal ControlSignal::to_spectral(int L) const {
  if (kind_ == Kind::kSpectral) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(support_.size(), L);
    const int k = std::min<int>(L, static_cast<int>(data_.cols()));
    c.leftCols(k) = data_.leftCols(k);
    return ControlSignal(support_, c);
  }
  // Trapezoid on a refined grid through the interpolant.
  const int q = 8 * std::max<int>(L, static_cast<int>(data_.cols()));
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(support_.size(), L);
  for (int k = 0; k <= q; ++k) {
    const double t = double(k) / q;
    const double w = (k == 0 || k == q) ? 0.5 / q : 1.0 / q;
    c += w * eval(t) * time_basis_values(L, t).transpose();
  }
  return ControlSignal(support_, c);
}

ControlSignal ControlSignal::operator+(const ControlSignal& o) const {
  if (empty()) return o;
  if (o.empty()) return *this;
  if (kind_ != o.kind_) throw std::invalid_argument("cannot add spectral and nodal controls");
  if (kind_ == Kind::kNodal && data_.cols() != o.data_.cols())
    throw std::invalid_argument("nodal controls on different grids");
  std::vector<Mode> sup = support_;
  for (const Mode& j : o.support_)
    if (support_index(j) < 0) sup.push_back(j);
  const int cols = static_cast<int>(std::max(data_.cols(), o.data_.cols()));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(sup.size(), cols);
  d.topLeftCorner(data_.rows(), data_.cols()) = data_;
  for (size_t i = 0; i < o.support_.size(); ++i) {
    int r = 0;
    while (sup[r] != o.support_[i]) ++r;
    d.row(r).head(o.data_.cols()) += o.data_.row(i);
  }
  ControlSignal out = *this;
  out.support_ = std::move(sup);
  out.data_ = std::move(d);
  return out;
}

ControlSignal ControlSignal::operator*(double s) const {
  ControlSignal out = *this;
  out.data_ *= s;
  return out;
}

double ControlSignal::sup_norm(int samples) const {
  double best = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double t = double(k) / (samples - 1);
    if (!support_.empty()) best = std::max(best, eval(t).norm());
  }
  return best;
}

double ControlSignal::l2_norm() const {
  if (kind_ == Kind::kSpectral) return data_.norm();
  const int n = static_cast<int>(data_.cols());
  const int q = 4 * n;
  double acc = 0.0;
  for (int k = 0; k <= q; ++k) {
    const double w = (k == 0 || k == q) ? 0.5 / q : 1.0 / q;
    acc += w * eval(double(k) / q).squaredNorm();
  }
  return std::sqrt(acc);
}

ControlSignal ControlSignal::translated(const Vec2& c) const {
  std::vector<Mode> sup = support_;
  for (const Mode& j : support_)
    if (support_index(-j) < 0) sup.push_back(-j);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(sup.size(), data_.cols());
  d.topRows(data_.rows()) = data_;
  Eigen::MatrixXd out = d;
  auto find = [&](const Mode& j) {
    for (size_t i = 0; i < sup.size(); ++i)
      if (sup[i] == j) return static_cast<int>(i);
    return -1;
  };
  for (size_t i = 0; i < sup.size(); ++i) {
    const Mode& k = sup[i];
    if (!k.positive()) continue;
    const int ip = find(-k);
    const double phi = k.j1 * c[0] + k.j2 * c[1];
    const double cp = std::cos(phi), sp = std::sin(phi);
    out.row(i) = d.row(i) * cp - d.row(ip) * sp;
    out.row(ip) = d.row(i) * sp + d.row(ip) * cp;
  }
  ControlSignal r = *this;
  r.support_ = std::move(sup);
  r.data_ = std::move(out);
  return r;
}

}  // namespace lagranflow
