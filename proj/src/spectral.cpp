#include "lagranflow/spectral.hpp"

#include <complex>
#include <mutex>
#include <stdexcept>

namespace lagranflow {

namespace {

using cd = std::complex<double>;

double wrap_angle(double x) {
  double r = std::fmod(x, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r;
}

// Powers z^a for a in [-n, n], stored at offset n.
void exp_powers(double x, int n, std::vector<cd>* out) {
  out->assign(2 * n + 1, cd(1.0, 0.0));
  const cd z(std::cos(x), std::sin(x));
  cd p(1.0, 0.0);
  for (int a = 1; a <= n; ++a) {
    p *= z;
    (*out)[n + a] = p;
    (*out)[n - a] = std::conj(p);
  }
}

// cos and sin of <j, x> for all modes.
void mode_phases(const ModeSet& modes, const Vec2& x, std::vector<double>* c,
                 std::vector<double>* s) {
  const int n = modes.cutoff();
  std::vector<cd> p1, p2;
  exp_powers(wrap_angle(x[0]), n, &p1);
  exp_powers(wrap_angle(x[1]), n, &p2);
  const int m = modes.size();
  c->resize(m);
  s->resize(m);
  for (int i = 0; i < m; ++i) {
    const cd e = p1[n + modes[i].j1] * p2[n + modes[i].j2];
    (*c)[i] = e.real();
    (*s)[i] = e.imag();
  }
}

}  // namespace

bool canonical_less(const Mode& a, const Mode& b) {
  if (a.l1() != b.l1()) return a.l1() < b.l1();
  if (a.j1 != b.j1) return a.j1 < b.j1;
  return a.j2 < b.j2;
}

ModeSet::ModeSet(int cutoff) : cutoff_(cutoff) {
  if (cutoff < 1) throw std::invalid_argument("spatial cutoff must be >= 1");
  for (int a = -cutoff; a <= cutoff; ++a)
    for (int b = -cutoff; b <= cutoff; ++b)
      if (a != 0 || b != 0) modes_.push_back({a, b});
  std::sort(modes_.begin(), modes_.end(), canonical_less);
  const int w = 2 * cutoff + 1;
  lookup_.assign(w * w, -1);
  for (int i = 0; i < size(); ++i)
    lookup_[(modes_[i].j1 + cutoff) * w + (modes_[i].j2 + cutoff)] = i;
  partner_.resize(size());
  for (int i = 0; i < size(); ++i) partner_[i] = index(-modes_[i]);
}

std::shared_ptr<const ModeSet> ModeSet::get(int cutoff) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const ModeSet>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(cutoff);
  if (it != cache.end()) return it->second;
  auto p = std::shared_ptr<const ModeSet>(new ModeSet(cutoff));
  cache.emplace(cutoff, p);
  return p;
}

int ModeSet::index(const Mode& j) const {
  if (j.linf() > cutoff_ || (j.j1 == 0 && j.j2 == 0)) return -1;
  const int w = 2 * cutoff_ + 1;
  return lookup_[(j.j1 + cutoff_) * w + (j.j2 + cutoff_)];
}

FourierField::FourierField(int cutoff)
    : modes_(ModeSet::get(cutoff)), coeffs_(Eigen::VectorXd::Zero(modes_->size())) {}

FourierField::FourierField(std::shared_ptr<const ModeSet> modes, Eigen::VectorXd coeffs)
    : modes_(std::move(modes)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != modes_->size())
    throw std::invalid_argument("coefficient vector does not match mode set");
}

double FourierField::coeff(const Mode& j) const {
  if (!modes_) return 0.0;
  const int i = modes_->index(j);
  return i < 0 ? 0.0 : coeffs_[i];
}

void FourierField::set_coeff(const Mode& j, double value) {
  const int i = modes_ ? modes_->index(j) : -1;
  if (i < 0) throw std::out_of_range("mode outside the spatial cutoff");
  coeffs_[i] = value;
}

FourierField FourierField::with_cutoff(int cutoff) const {
  FourierField out(cutoff);
  if (!modes_) return out;
  for (int i = 0; i < out.size(); ++i) out.coeffs_[i] = coeff(out.modes()[i]);
  return out;
}

double sobolev_norm(const ModeSet& modes, const Eigen::VectorXd& u, double s) {
  double acc = 0.0;
  for (int i = 0; i < modes.size(); ++i) acc += u[i] * u[i] * std::pow(modes[i].norm2(), s);
  return std::sqrt(acc);
}

double sobolev_norm(const FourierField& u, double s) {
  if (u.size() == 0) return 0.0;
  return sobolev_norm(u.modes(), u.coeffs(), s);
}

void eval_field_jet(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& x,
                    Vec2* value, Mat2* grad) {
  std::vector<double> c, s;
  mode_phases(modes, x, &c, &s);
  Vec2 v = Vec2::Zero();
  Mat2 g = Mat2::Zero();
  for (int i = 0; i < modes.size(); ++i) {
    const Mode& j = modes[i];
    const double w = u[i] / basis_norm(j);
    if (w == 0.0) continue;
    double f, df;
    if (j.positive()) {
      f = c[i];
      df = -s[i];
    } else {
      f = s[i];
      df = c[i];
    }
    const Vec2 p = j.perp();
    v += (w * f) * p;
    if (grad) {
      const Vec2 jv(j.j1, j.j2);
      g += (w * df) * p * jv.transpose();
    }
  }
  if (value) *value = v;
  if (grad) *grad = g;
}

void eval_field_hessian(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& x,
                        std::array<Mat2, 2>* hess) {
  std::vector<double> c, s;
  mode_phases(modes, x, &c, &s);
  (*hess)[0].setZero();
  (*hess)[1].setZero();
  for (int i = 0; i < modes.size(); ++i) {
    const Mode& j = modes[i];
    const double w = u[i] / basis_norm(j);
    if (w == 0.0) continue;
    const double ddf = j.positive() ? -c[i] : -s[i];
    const Vec2 p = j.perp();
    const Vec2 jv(j.j1, j.j2);
    const Mat2 jj = jv * jv.transpose();
    (*hess)[0] += (w * ddf * p[0]) * jj;
    (*hess)[1] += (w * ddf * p[1]) * jj;
  }
}

Vec2 eval_field(const FourierField& u, const Vec2& x) {
  if (u.size() == 0) return Vec2::Zero();
  Vec2 v;
  eval_field_jet(u.modes(), u.coeffs(), x, &v, nullptr);
  return v;
}

Eigen::Matrix<double, 2, Eigen::Dynamic> evaluation_rows(const ModeSet& modes, const Vec2& x) {
  std::vector<double> c, s;
  mode_phases(modes, x, &c, &s);
  Eigen::Matrix<double, 2, Eigen::Dynamic> rows(2, modes.size());
  for (int i = 0; i < modes.size(); ++i) {
    const Mode& j = modes[i];
    const double f = (j.positive() ? c[i] : s[i]) / basis_norm(j);
    rows.col(i) = f * j.perp();
  }
  return rows;
}

Eigen::VectorXd translate_coeffs(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& c) {
  Eigen::VectorXd out(u.size());
  for (int i = 0; i < modes.size(); ++i) {
    const Mode& k = modes[i];
    if (!k.positive()) continue;
    const int ip = modes.partner(i);
    const double phi = k.j1 * c[0] + k.j2 * c[1];
    const double cp = std::cos(phi), sp = std::sin(phi);
    // e_{-k} carries sin<k,x> along k-perp.
    const double a = u[i], b = u[ip];
    out[i] = a * cp - b * sp;
    out[ip] = a * sp + b * cp;
  }
  return out;
}

double trig_branch(const Mode& j, const Vec2& x) {
  const double th = j.j1 * x[0] + j.j2 * x[1];
  return j.positive() ? std::cos(th) : std::sin(th);
}

Vec2 VectorTrigExpansion::eval(const Vec2& x) const {
  Vec2 v = constant;
  for (const auto& [j, f] : terms) v += trig_branch(j, x) * f;
  return v;
}

VectorTrigExpansion VectorTrigExpansion::gradient(
    const std::vector<std::pair<Mode, double>>& scalar) {
  VectorTrigExpansion out;
  for (const auto& [j, g] : scalar) {
    const Vec2 jv(j.j1, j.j2);
    // d/dx cos<j,x> = j sin<-j,x>; d/dx sin<j,x> = j cos<j,x> = j cos<-j,x>.
    out.terms.push_back({-j, g * jv});
  }
  return out;
}

FourierField leray_project(const VectorTrigExpansion& f, int cutoff) {
  FourierField out(cutoff);
  const ModeSet& modes = out.modes();
  for (const auto& [j, F] : f.terms) {
    if (j.j1 == 0 && j.j2 == 0) continue;
    const int i = modes.index(j);
    if (i < 0) continue;
    out.coeffs()[i] += F.dot(j.perp()) * basis_norm(j) / j.norm2();
  }
  return out;
}

namespace {

// Exponential coefficients (a_+, a_-) of f(theta) = a_+ e^{i theta} + a_- e^{-i theta}.
std::array<cd, 2> trig_exp(bool is_cos, bool derivative) {
  const cd h(0.5, 0.0), ih(0.0, 0.5);
  if (!derivative) {
    if (is_cos) return {h, h};
    return {-ih, ih};
  }
  if (is_cos) return {ih, -ih};  // -sin
  return {h, h};                 // cos
}

}  // namespace

double TriadTable::coefficient(const Mode& m, const Mode& k, const Mode& l) {
  const double kl = k.perp().dot(Vec2(l.j1, l.j2));
  const double lm = double(l.j1) * m.j1 + double(l.j2) * m.j2;
  if (kl == 0.0 || lm == 0.0) return 0.0;
  const auto ak = trig_exp(k.positive(), false);
  const auto al = trig_exp(l.positive(), true);
  const auto am = trig_exp(m.positive(), false);
  cd acc(0.0, 0.0);
  for (int s1 = 0; s1 < 2; ++s1)
    for (int s2 = 0; s2 < 2; ++s2)
      for (int s3 = 0; s3 < 2; ++s3) {
        const int g1 = s1 ? -1 : 1, g2 = s2 ? -1 : 1, g3 = s3 ? -1 : 1;
        if (g1 * k.j1 + g2 * l.j1 + g3 * m.j1 == 0 && g1 * k.j2 + g2 * l.j2 + g3 * m.j2 == 0)
          acc += ak[s1] * al[s2] * am[s3];
      }
  const double integral = 4.0 * kPi * kPi * acc.real();
  return lm * kl * integral / (basis_norm(k) * basis_norm(l) * basis_norm(m));
}

TriadTable::TriadTable(int cutoff) : modes_(ModeSet::get(cutoff)) {
  const ModeSet& ms = *modes_;
  const int n = ms.size();
  std::map<std::array<int, 3>, double> acc;
  for (int ik = 0; ik < n; ++ik)
    for (int il = 0; il < n; ++il) {
      const Mode& k = ms[ik];
      const Mode& l = ms[il];
      const Mode cand[4] = {{k.j1 + l.j1, k.j2 + l.j2},
                            {-(k.j1 + l.j1), -(k.j2 + l.j2)},
                            {k.j1 - l.j1, k.j2 - l.j2},
                            {l.j1 - k.j1, l.j2 - k.j2}};
      for (int c = 0; c < 4; ++c) {
        const int im = ms.index(cand[c]);
        if (im < 0) continue;
        bool seen = false;
        for (int d = 0; d < c; ++d) seen = seen || cand[d] == cand[c];
        if (seen) continue;
        const double t = coefficient(cand[c], k, l);
        if (std::abs(t) < 1e-14) continue;
        acc[{im, std::min(ik, il), std::max(ik, il)}] += t;
      }
    }
  entries_.reserve(acc.size());
  for (const auto& [key, t] : acc)
    if (std::abs(t) > 1e-14) entries_.push_back({key[0], key[1], key[2], t});
}

std::shared_ptr<const TriadTable> TriadTable::get(int cutoff) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const TriadTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(cutoff);
  if (it != cache.end()) return it->second;
  auto p = std::shared_ptr<const TriadTable>(new TriadTable(cutoff));
  cache.emplace(cutoff, p);
  return p;
}

void TriadTable::apply(const Eigen::VectorXd& u, Eigen::VectorXd* out) const {
  out->setZero(u.size());
  double* o = out->data();
  const double* x = u.data();
  for (const Entry& e : entries_) o[e.m] += e.coef * x[e.k] * x[e.l];
}

void TriadTable::apply_derivative(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                  Eigen::VectorXd* out) const {
  out->setZero(u.size());
  double* o = out->data();
  const double* x = u.data();
  const double* y = v.data();
  for (const Entry& e : entries_) o[e.m] += e.coef * (x[e.k] * y[e.l] + y[e.k] * x[e.l]);
}

void TriadTable::jacobian(const Eigen::VectorXd& u, Eigen::MatrixXd* out) const {
  const int n = static_cast<int>(u.size());
  out->setZero(n, n);
  const double* x = u.data();
  for (const Entry& e : entries_) {
    (*out)(e.m, e.k) += e.coef * x[e.l];
    (*out)(e.m, e.l) += e.coef * x[e.k];
  }
}

FourierField nonlinear_term(const FourierField& u) {
  auto table = TriadTable::get(u.cutoff());
  Eigen::VectorXd out;
  table->apply(u.coeffs(), &out);
  return FourierField(u.mode_set(), out);
}

}  // namespace lagranflow
