#include "lagranflow/ldp.hpp"

#include <cmath>
#include <limits>
#include <queue>

#include <Eigen/Eigenvalues>

#include "lagranflow/rng.hpp"

namespace lagranflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int ipow(int b, int e) {
  int r = 1;
  for (int k = 0; k < e; ++k) r *= b;
  return r;
}

// One-sided power iteration with Collatz-Wielandt bounds on M + tau I.
bool power_side(const Eigen::MatrixXd& M, double tau, double tol, int max_it, Eigen::VectorXd* x, double* root,
                int* its) {
  const int n = static_cast<int>(M.rows());
  Eigen::VectorXd v = *x;
  double best_gap = kInf;
  int since_best = 0;
  for (int it = 1; it <= max_it; ++it) {
    Eigen::VectorXd w = M * v + tau * v;
    double lo = kInf, hi = 0.0;
    bool positive = true;
    for (int i = 0; i < n; ++i) {
      if (!(v[i] > 0.0)) {
        positive = false;
        break;
      }
      const double q = w[i] / v[i];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    const double m = w.maxCoeff();
    if (!(m > 0.0)) return false;
    v = w / m;
    if (positive) {
      if (hi - lo < best_gap) {
        best_gap = hi - lo;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    // Accept at the roundoff floor once the bounds stop tightening.
    if (positive && (hi - lo <= tol * hi || (since_best > 50 && best_gap <= 1e-11 * hi))) {
      *x = v;
      *root = 0.5 * (lo + hi) - tau;
      *its = it;
      return true;
    }
  }
  return false;
}

}  // namespace

FiniteChain::FiniteChain(Eigen::MatrixXd P) : P_(std::move(P)) {
  if (P_.rows() != P_.cols() || P_.rows() == 0) throw ChainError("transition matrix must be square and nonempty");
  for (int i = 0; i < P_.rows(); ++i) {
    if ((P_.row(i).array() < 0.0).any()) throw ChainError("negative entry in row " + std::to_string(i));
    if (std::abs(P_.row(i).sum() - 1.0) > 1e-12)
      throw ChainError("row " + std::to_string(i) + " does not sum to 1");
  }
  positive_ = (P_.array() > 0.0).all();
}

std::string FiniteChain::reachability_failure() const {
  const int n = size();
  for (int s = 0; s < n; ++s) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const int a = q.front();
      q.pop();
      for (int b = 0; b < n; ++b)
        if (P_(a, b) > 0.0 && !seen[b]) {
          seen[b] = 1;
          q.push(b);
        }
    }
    for (int t = 0; t < n; ++t)
      if (!seen[t]) return "state " + std::to_string(s) + " cannot reach state " + std::to_string(t);
  }
  return {};
}

void FiniteChain::require_irreducible() const {
  const std::string f = reachability_failure();
  if (!f.empty()) throw ChainError("chain is reducible: " + f);
}

void FiniteChain::require_positive() const {
  if (!positive_) throw ChainError("positivity required: chain has a zero transition probability");
}

Eigen::VectorXd FiniteChain::stationary() const {
  require_irreducible();
  return perron(P_).left;
}

constexpr int kDenseLimit = 96;

PerronResult perron(const Eigen::MatrixXd& M, double tol, int max_iterations, const Eigen::VectorXd* warm_right,
                    const Eigen::VectorXd* warm_left) {
  const int n = static_cast<int>(M.rows());
  PerronResult out;
  const Eigen::VectorXd rows = M.rowwise().sum();
  const double tau = 0.5 * (rows.minCoeff() > 0.0 ? rows.minCoeff() : rows.maxCoeff());
  Eigen::VectorXd r = warm_right && warm_right->size() == n && (warm_right->array() > 0).all()
                          ? *warm_right
                          : Eigen::VectorXd::Ones(n);
  Eigen::VectorXd l = warm_left && warm_left->size() == n && (warm_left->array() > 0).all()
                          ? *warm_left
                          : Eigen::VectorXd::Ones(n);
  double rr = 0.0, rl = 0.0;
  int ir = 0, il = 0;
  bool okr = false, okl = false;
  if (n > kDenseLimit) {
    okr = power_side(M, tau, tol, max_iterations, &r, &rr, &ir);
    okl = okr && power_side(M.transpose(), tau, tol, max_iterations, &l, &rl, &il);
  }
  if (okr && okl) {
    out.root = 0.5 * (rr + rl);
    out.right = r;
    out.left = l;
    out.iterations = ir + il;
    out.converged = true;
  } else {
    // Reducible or degenerate: dense fallback.
    Eigen::EigenSolver<Eigen::MatrixXd> es(M);
    int k = 0;
    for (int i = 1; i < n; ++i)
      if (es.eigenvalues()[i].real() > es.eigenvalues()[k].real()) k = i;
    out.root = std::max(0.0, es.eigenvalues()[k].real());
    out.right = es.eigenvectors().col(k).real().cwiseAbs();
    Eigen::EigenSolver<Eigen::MatrixXd> et(M.transpose());
    int kt = 0;
    for (int i = 1; i < n; ++i)
      if (et.eigenvalues()[i].real() > et.eigenvalues()[kt].real()) kt = i;
    out.left = et.eigenvectors().col(kt).real().cwiseAbs();
    const double res_r = (M * out.right - out.root * out.right).cwiseAbs().maxCoeff() / out.right.cwiseAbs().maxCoeff();
    const double res_l =
        (M.transpose() * out.left - out.root * out.left).cwiseAbs().maxCoeff() / out.left.cwiseAbs().maxCoeff();
    out.converged = out.root > 0.0 && std::max(res_r, res_l) <= 1e-10 * std::max(1.0, out.root);
  }
  out.left /= out.left.sum();
  const double ip = out.left.dot(out.right);
  if (ip > 0.0) out.right /= ip;
  out.log_root = out.root > 0.0 ? std::log(out.root) : -kInf;
  return out;
}

Eigen::MatrixXd tilted_matrix(const FiniteChain& chain, const Eigen::VectorXd& V) {
  return chain.P() * V.array().exp().matrix().asDiagonal();
}

double tilted_pressure(const FiniteChain& chain, const Eigen::VectorXd& V) {
  chain.require_irreducible();
  const double m = V.maxCoeff();
  const Eigen::VectorXd W = V.array() - m;
  return perron(tilted_matrix(chain, W), 1e-13).log_root + m;
}

EigenTriple fk_eigentriple(const FiniteChain& chain, const Eigen::VectorXd& V, std::uint64_t seed) {
  chain.require_positive();
  const Eigen::MatrixXd M = tilted_matrix(chain, V);
  const PerronResult pr = perron(M, 1e-15);
  EigenTriple t;
  t.lambda = pr.root;
  t.h = pr.right;
  t.mu = pr.left;
  CounterRng rng = CounterRng::stream(seed, StreamTag::kSynthetic, 0);
  const int n = chain.size();
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd f(n);
    for (int i = 0; i < n; ++i) f[i] = rng.uniform(-1.0, 1.0);
    const Eigen::VectorXd target = f.dot(t.mu) * t.h;
    Eigen::VectorXd g = f;
    double err = kInf;
    int steps = 0;
    while (steps < 100000) {
      g = M * g / t.lambda;
      ++steps;
      err = (g - target).cwiseAbs().maxCoeff();
      if (err < 1e-10) break;
    }
    t.certificate = std::max(t.certificate, err);
    t.certificate_steps = std::max(t.certificate_steps, steps);
  }
  return t;
}

Eigen::MatrixXd twisted_kernel(const FiniteChain& chain, const EigenTriple& t, const Eigen::VectorXd& V) {
  const int n = chain.size();
  Eigen::MatrixXd Q(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) Q(x, y) = chain.P()(x, y) * std::exp(V[y]) * t.h[y] / (t.lambda * t.h[x]);
  return Q;
}

Eigen::VectorXd equilibrium_state(const FiniteChain& chain, const Eigen::VectorXd& V) {
  chain.require_positive();
  const PerronResult pr = perron(tilted_matrix(chain, V.array() - V.maxCoeff()), 1e-15);
  Eigen::VectorXd s = pr.right.cwiseProduct(pr.left);
  return s / s.sum();
}

namespace {

struct SubProblem {
  std::vector<int> idx;
  Eigen::MatrixXd P;
  Eigen::VectorXd nu;
};

SubProblem restrict_support(const FiniteChain& chain, const Eigen::VectorXd& nu) {
  if (nu.size() != chain.size()) throw std::invalid_argument("measure size does not match the chain");
  if ((nu.array() < 0.0).any() || std::abs(nu.sum() - 1.0) > 1e-10)
    throw std::invalid_argument("nu must be a probability vector");
  SubProblem sp;
  for (int i = 0; i < nu.size(); ++i)
    if (nu[i] > 0.0) sp.idx.push_back(i);
  const int n = static_cast<int>(sp.idx.size());
  sp.P.resize(n, n);
  sp.nu.resize(n);
  for (int a = 0; a < n; ++a) {
    sp.nu[a] = nu[sp.idx[a]];
    for (int b = 0; b < n; ++b) sp.P(a, b) = chain.P()(sp.idx[a], sp.idx[b]);
  }
  return sp;
}

struct PressureEval {
  double q = 0.0;
  Eigen::VectorXd grad;
  PerronResult pr;
};

PressureEval sub_pressure(const Eigen::MatrixXd& P, const Eigen::VectorXd& V, const PerronResult* warm) {
  PressureEval e;
  const double m = V.maxCoeff();
  const Eigen::MatrixXd M = P * (V.array() - m).exp().matrix().asDiagonal();
  e.pr = perron(M, 1e-14, 1000000, warm ? &warm->right : nullptr, warm ? &warm->left : nullptr);
  e.q = e.pr.log_root + m;
  e.grad = e.pr.right.cwiseProduct(e.pr.left);
  e.grad /= e.grad.sum();
  return e;
}

}  // namespace

double legendre_rate(const FiniteChain& chain, const Eigen::VectorXd& nu) {
  const SubProblem sp = restrict_support(chain, nu);
  const int n = static_cast<int>(sp.idx.size());
  if (perron(sp.P).root <= 0.0) return kInf;
  Eigen::VectorXd V = sp.nu.array().log();
  PressureEval e = sub_pressure(sp.P, V, nullptr);
  double G = sp.nu.dot(V) - e.q;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd g = sp.nu - e.grad;
    if (g.cwiseAbs().maxCoeff() < 1e-12) break;
    Eigen::MatrixXd J(n, n);
    const double h = 1e-5;
    for (int b = 0; b < n; ++b) {
      Eigen::VectorXd vp = V, vm = V;
      vp[b] += h;
      vm[b] -= h;
      J.col(b) = (sub_pressure(sp.P, vp, &e.pr).grad - sub_pressure(sp.P, vm, &e.pr).grad) / (2 * h);
    }
    // J has the constants (and, on word chains, coboundaries) in its kernel.
    J = 0.5 * (J + J.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k)
      if (es.eigenvalues()[k] > 1e-9 * top)
        step += (es.eigenvectors().col(k).dot(g) / es.eigenvalues()[k]) * es.eigenvectors().col(k);
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Eigen::VectorXd Vt = V + t * step;
      PressureEval et = sub_pressure(sp.P, Vt, &e.pr);
      const double Gt = sp.nu.dot(Vt) - et.q;
      if (std::isfinite(Gt) && Gt >= G - 1e-15 * std::max(1.0, std::abs(G))) {
        V = Vt;
        e = std::move(et);
        G = Gt;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  return std::max(0.0, G);
}

Level2Result dv_rate_level2(const FiniteChain& chain, const Eigen::VectorXd& nu, int restarts, std::uint64_t seed) {
  chain.require_irreducible();
  Level2Result out;
  out.method_b = legendre_rate(chain, nu);
  const SubProblem sp = restrict_support(chain, nu);
  const int n = static_cast<int>(sp.idx.size());
  auto objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    double f = 0.0;
    if (grad) *grad = sp.nu;
    const double m = w.maxCoeff();
    const Eigen::VectorXd ew = (w.array() - m).exp();
    for (int x = 0; x < n; ++x) {
      const Eigen::VectorXd terms = sp.P.row(x).transpose().cwiseProduct(ew);
      const double z = terms.sum();
      if (!(z > 0.0)) return -kInf;
      f += sp.nu[x] * (w[x] - m - std::log(z));
      if (grad) *grad -= sp.nu[x] * terms / z;
    }
    return f;
  };
  CounterRng rng = CounterRng::stream(seed, StreamTag::kRestarts, 0);
  double best = -kInf;
  for (int r = 0; r < restarts; ++r) {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = r == 0 ? 0.0 : rng.uniform(-2.0, 2.0);
    Eigen::VectorXd g;
    double f = objective(w, &g);
    double step = 1.0;
    Eigen::VectorXd wprev = w, gprev = g;
    int stall = 0;
    for (int it = 0; it < 20000 && g.cwiseAbs().maxCoeff() > 1e-12 && stall < 20; ++it) {
      const double fold = f;
      if (it > 0) {
        const Eigen::VectorXd s = w - wprev, y = g - gprev;
        const double sy = s.dot(y);
        if (sy < 0.0) step = std::min(1e6, s.squaredNorm() / -sy);
      }
      wprev = w;
      gprev = g;
      double t = step;
      for (int k = 0; k < 60; ++k, t *= 0.5) {
        Eigen::VectorXd gt;
        const Eigen::VectorXd wt = w + t * g;
        const double ft = objective(wt, &gt);
        if (ft >= f + 1e-4 * t * g.squaredNorm() || k == 59) {
          w = wt;
          f = ft;
          g = gt;
          break;
        }
      }
      stall = f - fold <= 1e-16 * std::max(1.0, std::abs(f)) ? stall + 1 : 0;
    }
    best = std::max(best, f);
  }
  out.method_a = std::max(0.0, best);
  if (std::isinf(out.method_b)) {
    out.discrepancy = std::isinf(out.method_a) ? 0.0 : kInf;
  } else {
    out.discrepancy = std::abs(out.method_a - out.method_b);
  }
  out.flagged = !(out.discrepancy <= 1e-6);
  return out;
}

RateFunctionReport rate_function_report(const FiniteChain& chain, const std::vector<Eigen::VectorXd>& points) {
  RateFunctionReport rep;
  rep.points = points;
  for (const auto& p : points) {
    const Level2Result r = dv_rate_level2(chain, p);
    rep.values_a.push_back(r.method_a);
    rep.values_b.push_back(r.method_b);
    rep.max_discrepancy = std::max(rep.max_discrepancy, r.discrepancy);
  }
  return rep;
}

double MarkovMeasure::word_probability(const std::vector<int>& w) const {
  const int len = static_cast<int>(w.size());
  if (len < r) {
    int prefix = 0;
    for (int k = 0; k < len; ++k) prefix = prefix * d + w[k];
    const int span = ipow(d, r - len);
    return marginal.segment(prefix * span, span).sum();
  }
  int idx = 0;
  for (int k = 0; k < r; ++k) idx = idx * d + w[k];
  double p = marginal[idx];
  const int top = ipow(d, r - 1);
  for (size_t k = r; k < w.size() && p > 0.0; ++k) {
    p *= kernel(idx, w[k]);
    idx = (idx % top) * d + w[k];
  }
  return p;
}

double MarkovMeasure::shift_residual() const {
  const int top = ipow(d, r - 1);
  double res = 0.0;
  for (int tail = 0; tail < top; ++tail)
    for (int b = 0; b < d; ++b) {
      double acc = 0.0;
      for (int a = 0; a < d; ++a) {
        const int w = a * top + tail;
        acc += marginal[w] * kernel(w, b);
      }
      res = std::max(res, std::abs(acc - marginal[tail * d + b]));
    }
  res = std::max(res, std::abs(marginal.sum() - 1.0));
  for (int w = 0; w < kernel.rows(); ++w) res = std::max(res, std::abs(kernel.row(w).sum() - 1.0));
  return res;
}

MarkovMeasure MarkovMeasure::of_chain(const FiniteChain& chain, int r) {
  MarkovMeasure m;
  m.d = chain.size();
  m.r = r;
  const int W = ipow(m.d, r);
  const Eigen::VectorXd pi = chain.stationary();
  m.marginal.resize(W);
  m.kernel.resize(W, m.d);
  for (int w = 0; w < W; ++w) {
    std::vector<int> letters(r);
    int x = w;
    for (int k = r - 1; k >= 0; --k) {
      letters[k] = x % m.d;
      x /= m.d;
    }
    double p = pi[letters[0]];
    for (int k = 1; k < r; ++k) p *= chain.P()(letters[k - 1], letters[k]);
    m.marginal[w] = p;
    m.kernel.row(w) = chain.P().row(letters[r - 1]);
  }
  return m;
}

MarkovMeasure MarkovMeasure::product(const Eigen::VectorXd& nu) {
  MarkovMeasure m;
  m.d = static_cast<int>(nu.size());
  m.r = 1;
  m.marginal = nu;
  m.kernel = nu.transpose().replicate(m.d, 1);
  return m;
}

MarkovMeasure MarkovMeasure::first_order(const Eigen::VectorXd& pi, const Eigen::MatrixXd& K) {
  MarkovMeasure m;
  m.d = static_cast<int>(pi.size());
  m.r = 1;
  m.marginal = pi;
  m.kernel = K;
  return m;
}

MarkovMeasure MarkovMeasure::reversed() const {
  if (r != 1) throw std::invalid_argument("reversal implemented for first-order measures");
  MarkovMeasure m = *this;
  for (int x = 0; x < d; ++x)
    for (int y = 0; y < d; ++y) m.kernel(x, y) = marginal[x] > 0.0 ? marginal[y] * kernel(y, x) / marginal[x] : 0.0;
  return m;
}

FiniteChain word_chain(const FiniteChain& chain, int k) {
  const int d = chain.size();
  const int W = ipow(d, k);
  const int top = ipow(d, k - 1);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(W, W);
  for (int w = 0; w < W; ++w)
    for (int b = 0; b < d; ++b) P(w, (w % top) * d + b) = chain.P()(w % d, b);
  return FiniteChain(P);
}

Level3Result dv_rate_level3(const FiniteChain& chain, const MarkovMeasure& lambda) {
  if (lambda.d != chain.size()) throw std::invalid_argument("measure alphabet does not match the chain");
  Level3Result out;
  out.shift_residual = lambda.shift_residual();
  if (out.shift_residual > 1e-10) {
    out.infinite = true;
    out.value = out.dual_value = kInf;
    return out;
  }
  const int W = static_cast<int>(lambda.marginal.size());
  double v = 0.0;
  for (int w = 0; w < W && !out.infinite; ++w) {
    if (lambda.marginal[w] <= 0.0) continue;
    for (int b = 0; b < lambda.d; ++b) {
      const double k = lambda.kernel(w, b);
      if (k <= 0.0) continue;
      const double p = chain.P()(w % lambda.d, b);
      if (p <= 0.0) {
        out.infinite = true;
        break;
      }
      v += lambda.marginal[w] * k * std::log(k / p);
    }
  }
  if (out.infinite) {
    out.value = out.dual_value = kInf;
    return out;
  }
  out.value = v;
  const FiniteChain wc = word_chain(chain, lambda.r + 1);
  Eigen::VectorXd nu(W * lambda.d);
  for (int w = 0; w < W; ++w)
    for (int b = 0; b < lambda.d; ++b) nu[w * lambda.d + b] = lambda.marginal[w] * lambda.kernel(w, b);
  out.dual_value = legendre_rate(wc, nu);
  out.discrepancy = std::abs(out.dual_value - out.value);
  return out;
}

double level3_rate_truncated(const FiniteChain& chain,
                             const std::function<double(const std::vector<int>&)>& word_probability, int n) {
  const int d = chain.size();
  const long total = static_cast<long>(std::pow(d, n));
  std::vector<int> w(n, 0), wb(n + 1);
  double acc = 0.0;
  for (long c = 0; c < total; ++c) {
    long x = c;
    for (int k = n - 1; k >= 0; --k) {
      w[k] = static_cast<int>(x % d);
      x /= d;
    }
    const double pw = word_probability(w);
    if (pw > 0.0) {
      std::copy(w.begin(), w.end(), wb.begin());
      for (int b = 0; b < d; ++b) {
        wb[n] = b;
        const double p = word_probability(wb);
        if (p <= 0.0) continue;
        const double pp = chain.P()(w[n - 1], b);
        if (pp <= 0.0) return kInf;
        acc += p * std::log(p / (pw * pp));
      }
    }
  }
  return acc;
}

Eigen::MatrixXd entropy_production_matrix(const FiniteChain& chain) {
  chain.require_positive();
  const Eigen::MatrixXd& P = chain.P();
  return (P.array() / P.transpose().array()).log().matrix();
}

std::pair<double, double> cycle_mean_range(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  auto karp_min = [&](const Eigen::MatrixXd& w) {
    std::vector<Eigen::VectorXd> D(n + 1, Eigen::VectorXd::Constant(n, kInf));
    D[0].setZero();
    for (int k = 1; k <= n; ++k)
      for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u)
          if (P(u, v) > 0.0 && std::isfinite(D[k - 1][u])) D[k][v] = std::min(D[k][v], D[k - 1][u] + w(u, v));
    double best = kInf;
    for (int v = 0; v < n; ++v) {
      if (!std::isfinite(D[n][v])) continue;
      double worst = -kInf;
      for (int k = 0; k < n; ++k)
        if (std::isfinite(D[k][v])) worst = std::max(worst, (D[n][v] - D[k][v]) / (n - k));
      best = std::min(best, worst);
    }
    return best;
  };
  return {karp_min(weights), -karp_min(-weights)};
}

EntropyProductionRate::EntropyProductionRate(const FiniteChain& chain) {
  chain.require_positive();
  logP_ = chain.P().array().log().matrix();
  sigma_ = entropy_production_matrix(chain);
  pi_ = chain.stationary();
  const auto range = cycle_mean_range(sigma_, chain.P());
  r_min_ = range.first;
  r_max_ = range.second;
}

namespace {

// Perron data of exp(E) for a positive log-weight matrix E, computed on the
// diagonally similar matrix exp(E + phi_x - phi_y - c) whose entries are at
// most 1 and whose heaviest cycle has weight 1. c is the maximum cycle mean.
struct BalancedPerron {
  Eigen::MatrixXd M;
  PerronResult pr;
  double shift = 0.0;
};

BalancedPerron balanced_perron(const Eigen::MatrixXd& E) {
  const int n = static_cast<int>(E.rows());
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, n);
  BalancedPerron b;
  b.shift = cycle_mean_range(E, ones).second;
  // Longest-path potentials; no cycle of E - c is positive.
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  for (int it = 0; it < n; ++it)
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) phi[y] = std::max(phi[y], phi[x] + E(x, y) - b.shift);
  b.M.resize(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) b.M(x, y) = std::exp(std::min(0.0, E(x, y) + phi[x] - phi[y] - b.shift));
  b.pr = perron(b.M, 1e-15);
  return b;
}

}  // namespace

double EntropyProductionRate::pressure(double s) const {
  const BalancedPerron b = balanced_perron(logP_ + s * sigma_);
  return b.pr.log_root + b.shift;
}

double EntropyProductionRate::pressure_derivative(double s) const {
  const BalancedPerron b = balanced_perron(logP_ + s * sigma_);
  const Eigen::MatrixXd Ms = b.M.cwiseProduct(sigma_);
  return b.pr.left.dot(Ms * b.pr.right) / (b.pr.root * b.pr.left.dot(b.pr.right));
}

double EntropyProductionRate::mean() const {
  const Eigen::MatrixXd P = logP_.array().exp().matrix();
  double acc = 0.0;
  for (int x = 0; x < P.rows(); ++x) acc += pi_[x] * P.row(x).dot(sigma_.row(x));
  return acc;
}

double EntropyProductionRate::rate(double r) const {
  const double span = std::max(1.0, r_max_ - r_min_);
  if (r < r_min_ - 1e-13 * span || r > r_max_ + 1e-13 * span) return kInf;
  // Solve e'(s) = r for the convex pressure e.
  double lo = -1.0, hi = 1.0;
  const double cap = 1e4;
  while (pressure_derivative(hi) < r && hi < cap) hi *= 2.0;
  while (pressure_derivative(lo) > r && lo > -cap) lo *= 2.0;
  double s = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = pressure_derivative(s) - r;
    if (std::abs(f) < 1e-15 * span) break;
    if (f > 0.0) hi = s;
    else lo = s;
    const double h = 1e-6 * std::max(1.0, std::abs(s));
    const double fp = (pressure_derivative(s + h) - pressure_derivative(s - h)) / (2.0 * h);
    double next = fp > 0.0 ? s - f / fp : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-15 * std::max(1.0, std::abs(s))) {
      s = next;
      break;
    }
    s = next;
  }
  return std::max(0.0, s * r - pressure(s));
}

GcReport gc_symmetry_check(const FiniteChain& chain, const std::vector<double>& r_grid, int level3_samples,
                           std::uint64_t seed) {
  chain.require_positive();
  const EntropyProductionRate ep(chain);
  GcReport rep;
  rep.r_min = ep.r_min();
  rep.r_max = ep.r_max();
  for (double r : r_grid) {
    const double ip = ep.rate(r), in = ep.rate(-r);
    rep.r.push_back(r);
    rep.rate_pos.push_back(ip);
    rep.rate_neg.push_back(in);
    if (std::isfinite(ip) && std::isfinite(in)) {
      ++rep.finite_points;
      rep.max_residual = std::max(rep.max_residual, std::abs(in - ip - r));
    } else if (std::isfinite(ip) != std::isfinite(in)) {
      rep.max_residual = kInf;
    }
  }
  rep.mean_ep = ep.mean();
  rep.mean_ep_derivative = ep.pressure_derivative(0.0);

  const Eigen::MatrixXd sigma = entropy_production_matrix(chain);
  const int d = chain.size();
  for (int k = 0; k < level3_samples; ++k) {
    const FiniteChain K = random_positive_chain(d, seed * 1000003ULL + k);
    const MarkovMeasure lam = MarkovMeasure::first_order(K.stationary(), K.P());
    const MarkovMeasure rev = lam.reversed();
    double ep_lam = 0.0;
    for (int x = 0; x < d; ++x)
      for (int y = 0; y < d; ++y) ep_lam += lam.marginal[x] * lam.kernel(x, y) * sigma(x, y);
    const double lhs = dv_rate_level3(chain, rev).value - dv_rate_level3(chain, lam).value;
    rep.level3_max_residual = std::max(rep.level3_max_residual, std::abs(lhs - ep_lam));
    ++rep.level3_samples;
  }
  return rep;
}

EquilibriumCheck check_equilibrium(const FiniteChain& chain, const Eigen::VectorXd& V, int others,
                                   std::uint64_t seed) {
  EquilibriumCheck c;
  c.state = equilibrium_state(chain, V);
  const double q = tilted_pressure(chain, V);
  const double i = legendre_rate(chain, c.state);
  c.identity_residual = std::abs(V.dot(c.state) - i - q);
  c.self_rate = std::max(0.0, i - V.dot(c.state) + q);
  c.min_other_rate = kInf;
  for (int k = 0; k < others; ++k) {
    const Eigen::VectorXd nu = random_probability(chain.size(), seed * 7919ULL + k, 1e-3);
    c.min_other_rate = std::min(c.min_other_rate, legendre_rate(chain, nu) - V.dot(nu) + q);
  }
  return c;
}

FiniteChain random_positive_chain(int d, std::uint64_t seed, double floor) {
  CounterRng rng = CounterRng::stream(seed, StreamTag::kSynthetic, 1);
  Eigen::MatrixXd P(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) P(i, j) = floor + rng.uniform();
    P.row(i) /= P.row(i).sum();
  }
  return FiniteChain(P);
}

Eigen::VectorXd random_probability(int d, std::uint64_t seed, double floor) {
  CounterRng rng = CounterRng::stream(seed, StreamTag::kSynthetic, 2);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = floor - std::log(1.0 - rng.uniform());
  return v / v.sum();
}

}  // namespace lagranflow
