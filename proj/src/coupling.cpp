#include "lagranflow/coupling.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "lagranflow/parallel.hpp"

namespace lagranflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Coupling-decision streams sit above the perturbation streams.
constexpr std::uint64_t kCouplingStreams = 1ULL << 40;

// log l(xi + s) - log l(xi) for the product bump law.
double log_ratio(const Eigen::MatrixXd& xi, const Eigen::MatrixXd& s) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    if (s.data()[i] == 0.0) continue;
    acc += bump_log_density(xi.data()[i] + s.data()[i]) - bump_log_density(xi.data()[i]);
  }
  return acc;
}

}  // namespace

double state_distance(const SystemState& a, const SystemState& b) {
  return (a.u.coeffs() - b.u.coeffs()).norm() + torus_distance(a.y, b.y);
}

RightInverse::RightInverse(Eigen::MatrixXd A, double gamma) : A_(std::move(A)), gamma_(gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be > 0");
  Eigen::MatrixXd G = A_ * A_.transpose();
  G.diagonal().array() += gamma_;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  condition_ = lo > 0.0 ? es.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
  llt_.compute(G);
}

Eigen::VectorXd RightInverse::apply(const Eigen::VectorXd& f) const { return A_.transpose() * llt_.solve(f); }

Eigen::MatrixXd RightInverse::matrix() const {
  return A_.transpose() * llt_.solve(Eigen::MatrixXd::Identity(A_.rows(), A_.rows()));
}

double RightInverse::residual(const Eigen::VectorXd& f) const { return (A_ * apply(f) - f).norm(); }

RightInverse approximate_right_inverse(const Eigen::MatrixXd& A, double gamma) { return RightInverse(A, gamma); }

std::vector<ControlSignal> control_subspace(const NoiseSpec& spec, int M) {
  if (M < 1 || M > spec.time_modes) throw std::invalid_argument("control time modes must be in [1, L]");
  auto modes = ModeSet::get(spec.spatial_cutoff);
  std::vector<ControlSignal> out;
  out.reserve(static_cast<size_t>(M) * modes->size());
  for (int l = 1; l <= M; ++l)
    for (int i = 0; i < modes->size(); ++i) {
      Eigen::MatrixXd c = Eigen::MatrixXd::Zero(1, l);
      c(0, l - 1) = spec.scale((*modes)[i], l);
      out.emplace_back(std::vector<Mode>{(*modes)[i]}, c);
    }
  return out;
}

namespace {

std::string locality_message(double d, double r) {
  std::ostringstream os;
  os.precision(17);
  os << "pair distance " << d << " exceeds locality radius " << r;
  return os.str();
}

}  // namespace

LocalityError::LocalityError(double distance, double radius)
    : std::domain_error(locality_message(distance, radius)), distance_(distance), radius_(radius) {}

Eigen::VectorXd state_difference(const SystemState& base, const SystemState& other) {
  const int M = base.u.size();
  if (other.u.size() != M) throw std::invalid_argument("states have different cutoffs");
  Eigen::VectorXd d(M + 2);
  d.head(M) = other.u.coeffs() - base.u.coeffs();
  d.tail(2) = torus_delta(base.y, other.y);
  return d;
}

ShiftOperator::ShiftOperator(const SystemState& base, const KickRealization& kick, const NoiseSpec& spec,
                             const FlowParams& fp, const ShiftOptions& opts)
    : base_(base), kick_(kick), spec_(spec), fp_(fp), opts_(opts) {
  DenseRecord rec;
  step_map(base, kick, spec, fp, &rec);
  build(rec);
}

ShiftOperator::ShiftOperator(const SystemState& base, const KickRealization& kick, const DenseRecord& record,
                             const NoiseSpec& spec, const FlowParams& fp, const ShiftOptions& opts)
    : base_(base), kick_(kick), spec_(spec), fp_(fp), opts_(opts) {
  build(record);
}

void ShiftOperator::build(const DenseRecord& record) {
  record_ = record;
  const std::vector<ControlSignal> basis = control_subspace(spec_, opts_.control_time_modes);
  inverse_ = RightInverse(jacobian_matrix(record_, fp_, basis), opts_.gamma);
}

Eigen::VectorXd ShiftOperator::propagated_difference(const SystemState& other) const {
  return state_derivative(record_, fp_, state_difference(base_, other));
}

KickRealization ShiftOperator::shift_coordinates(const SystemState& other) const {
  const double d = state_distance(base_, other);
  if (d > opts_.locality_radius) throw LocalityError(d, opts_.locality_radius);
  const Eigen::VectorXd c = -inverse_.apply(propagated_difference(other));
  auto modes = ModeSet::get(spec_.spatial_cutoff);
  const int n = modes->size();
  KickRealization k;
  k.spatial_cutoff = spec_.spatial_cutoff;
  k.xi = Eigen::MatrixXd::Zero(n, spec_.time_modes);
  for (int l = 0; l < opts_.control_time_modes; ++l) k.xi.col(l) = c.segment(l * n, n);
  return k;
}

ControlSignal stabilizing_shift(const SystemState& base, const SystemState& other, const KickRealization& kick,
                                const ShiftOperator& op) {
  if (state_distance(base, op.base()) != 0.0 || kick.xi.rows() != op.kick().xi.rows() ||
      kick.xi.cols() != op.kick().xi.cols() || kick.xi != op.kick().xi)
    throw std::invalid_argument("shift operator was built at a different base point");
  return op.shift_coordinates(other).to_signal(op.spec());
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("line fit needs >= 2 matched points");
  const int n = static_cast<int>(x.size());
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("line fit needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ssr += r * r;
  }
  f.slope_se = n > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0.0;
  f.r_squared = syy > 0.0 ? 1.0 - ssr / syy : (ssr == 0.0 ? 1.0 : 0.0);
  return f;
}

KickRealization maximal_coupled_kick(const KickRealization& eta, const Eigen::MatrixXd& shift, const NoiseSpec& spec,
                                     CounterRng& rng, int residual_cap, bool* coupled, bool* capped) {
  if (shift.rows() != eta.xi.rows() || shift.cols() != eta.xi.cols())
    throw std::invalid_argument("shift shape does not match the kick");
  if (coupled) *coupled = true;
  if (capped) *capped = false;
  KickRealization out = eta;
  if (rng.uniform() < std::exp(std::min(0.0, log_ratio(eta.xi, shift)))) {
    out.xi += shift;
    return out;
  }
  if (coupled) *coupled = false;
  // Residual law: V ~ l accepted with probability 1 - min(1, l(V - Phi) / l(V)).
  for (int round = 0; round < residual_cap; ++round) {
    out = sample_kick(spec, rng);
    if (rng.uniform() >= std::exp(std::min(0.0, log_ratio(out.xi, -shift)))) return out;
  }
  if (capped) *capped = true;
  return out;
}

CouplingReport coupled_pair_run(const SystemState& a, const SystemState& b, const NoiseSpec& spec,
                                const FlowParams& fp, std::uint64_t seed, int K, const CouplingOptions& opts) {
  ChainOptions co;
  co.keep_kicks = true;
  co.keep_records = true;
  co.stream_index = opts.stream_index;
  const Trajectory tr = run_chain(a, spec, fp, seed, K, co);
  CouplingReport rep;
  rep.q = opts.q;
  CounterRng rng = CounterRng::stream(seed, StreamTag::kCoupling, kCouplingStreams + opts.stream_index);
  SystemState second{b.u, wrap_point(b.y)};
  rep.distances.push_back(state_distance(tr.states[0], second));
  rep.first_energy.push_back(energy(tr.states[0].u));
  for (int k = 0; k < K; ++k) {
    const double prev = rep.distances.back();
    KickRealization kick = tr.kicks[k];
    if (prev > opts.shift.locality_radius) {
      rep.failures.push_back({k + 1, "locality"});
    } else if (prev > 0.0) {
      const ShiftOperator op(tr.states[k], tr.kicks[k], tr.records[k], spec, fp, opts.shift);
      const Eigen::MatrixXd shift = op.shift_coordinates(second).xi;
      if (opts.kind == CouplingKind::kSynchronous) {
        if ((kick.xi + shift).cwiseAbs().maxCoeff() < 1.0)
          kick.xi += shift;
        else
          rep.failures.push_back({k + 1, "support"});
      } else {
        bool coupled = false, capped = false;
        kick = maximal_coupled_kick(kick, shift, spec, rng, opts.residual_cap, &coupled, &capped);
        if (!coupled) rep.failures.push_back({k + 1, "maximal"});
        if (capped) rep.failures.push_back({k + 1, "residual-cap"});
      }
    }
    second = step_map(second, kick, spec, fp);
    const double d = state_distance(tr.states[k + 1], second);
    rep.distances.push_back(d);
    rep.first_energy.push_back(energy(tr.states[k + 1].u));
    if (prev > opts.distance_floor && prev <= opts.shift.locality_radius) {
      ++rep.tested_steps;
      rep.squeeze_factors.push_back(d / prev);
      const bool ok = d <= opts.q * prev;
      rep.contraction.push_back(ok);
      if (!ok) ++rep.non_contraction_events;
    } else {
      rep.squeeze_factors.push_back(kNaN);
      rep.contraction.push_back(true);
    }
  }
  std::vector<double> ks, ld;
  for (int k = 0; k <= K; ++k)
    if (rep.distances[k] > opts.distance_floor) {
      ks.push_back(k);
      ld.push_back(std::log(rep.distances[k]));
    }
  if (ks.size() >= 2) rep.gamma_mix = -fit_line(ks, ld).slope;
  return rep;
}

namespace {

double gaussian(CounterRng& rng) {
  double u1 = rng.uniform();
  while (u1 <= 0.0) u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace

SystemState perturbed_state(const SystemState& s, double d, std::uint64_t seed, std::uint64_t index) {
  if (d < 0.0) throw std::invalid_argument("perturbation size must be >= 0");
  CounterRng rng = CounterRng::stream(seed, StreamTag::kCoupling, index);
  const int M = s.u.size();
  Eigen::VectorXd du(M);
  for (int i = 0; i < M; ++i) du[i] = gaussian(rng);
  Vec2 dy(gaussian(rng), gaussian(rng));
  const double t = d / (du.norm() + dy.norm());
  SystemState out = s;
  out.u.coeffs() += t * du;
  out.y = wrap_point(s.y + t * dy);
  return out;
}

CouplingExperiment coupling_experiment(const NoiseSpec& spec, const FlowParams& fp, const std::vector<double>& d0,
                                       int pairs, int K, const CouplingOptions& opts, std::uint64_t seed,
                                       int burn_in, int workers) {
  if (pairs < 1 || d0.empty()) throw std::invalid_argument("coupling experiment needs pairs and d0 values");
  ChainOptions base_opts;
  base_opts.stream_index = 0;
  const Trajectory base =
      run_chain(SystemState::rest(spec.spatial_cutoff, Vec2(1.0, 2.0)), spec, fp, seed, burn_in + pairs, base_opts);
  const int nd = static_cast<int>(d0.size());
  std::vector<CouplingReport> reports(static_cast<size_t>(nd) * pairs);
  parallel_for(nd * pairs, workers, [&](int job) {
    const int di = job / pairs, i = job % pairs;
    const SystemState& s = base.states[burn_in + i];
    CouplingOptions o = opts;
    o.stream_index = 1 + static_cast<std::uint64_t>(i);
    reports[job] = coupled_pair_run(s, perturbed_state(s, d0[di], seed, i), spec, fp, seed, K, o);
  });
  CouplingExperiment ex;
  ex.d0 = d0;
  for (int di = 0; di < nd; ++di) {
    int ev = 0, te = 0, sf = 0, cf = 0;
    for (int i = 0; i < pairs; ++i) {
      const CouplingReport& r = reports[static_cast<size_t>(di) * pairs + i];
      ev += r.non_contraction_events;
      te += r.tested_steps;
      for (const auto& f : r.failures) {
        sf += f.reason == "support";
        cf += f.reason == "maximal";
      }
    }
    ex.coupling_failures.push_back(cf);
    ex.events.push_back(ev);
    ex.tested.push_back(te);
    ex.support_failures.push_back(sf);
    ex.frequency.push_back(te > 0 ? static_cast<double>(ev) / te : 0.0);
    ex.fitted_c = std::max(ex.fitted_c, ex.frequency.back() / d0[di]);
  }
  if (nd >= 2) {
    const LineFit f = fit_line(d0, ex.frequency);
    ex.slope = f.slope;
    ex.intercept = f.intercept;
    ex.r_squared = f.r_squared;
  }
  ex.reports = std::move(reports);
  return ex;
}

MixingReport estimate_mixing_rate(const NoiseSpec& spec, const FlowParams& fp,
                                  const std::vector<SystemState>& initial_states, const MixingOptions& opts) {
  const int S = static_cast<int>(initial_states.size());
  const int T = opts.trajectories, K = opts.K, B = opts.tv_bins;
  if (S < 2 || T < 2 || K < 1 || B < 1) throw std::invalid_argument("mixing estimate needs >= 2 states, >= 2 paths");
  MixingReport rep;
  std::vector<Mode> ms;
  for (int m1 = 0; m1 <= opts.fourier_radius; ++m1)
    for (int m2 = -opts.fourier_radius; m2 <= opts.fourier_radius; ++m2) {
      const Mode m{m1, m2};
      if (m.positive()) ms.push_back(m);
    }
  rep.observables.push_back("energy");
  for (const Mode& m : ms) {
    rep.observables.push_back("cos(" + std::to_string(m.j1) + "," + std::to_string(m.j2) + ")");
    rep.observables.push_back("sin(" + std::to_string(m.j1) + "," + std::to_string(m.j2) + ")");
  }
  const int O = static_cast<int>(rep.observables.size());
  // values[job] is (K+1) x O; bins[job][k] is the cell of y_k.
  std::vector<Eigen::MatrixXd> values(static_cast<size_t>(S) * T);
  std::vector<std::vector<int>> cells(static_cast<size_t>(S) * T);
  parallel_for(S * T, opts.workers, [&](int job) {
    const int si = job / T;
    ChainOptions co;
    co.stream_index = static_cast<std::uint64_t>(job);
    const Trajectory tr = run_chain(initial_states[si], spec, fp, opts.seed, K, co);
    Eigen::MatrixXd v(K + 1, O);
    std::vector<int> c(K + 1);
    for (int k = 0; k <= K; ++k) {
      const SystemState& st = tr.states[k];
      v(k, 0) = energy(st.u);
      for (size_t r = 0; r < ms.size(); ++r) {
        const double ph = ms[r].j1 * st.y[0] + ms[r].j2 * st.y[1];
        v(k, 1 + 2 * r) = std::cos(ph);
        v(k, 2 + 2 * r) = std::sin(ph);
      }
      const int bx = std::min(B - 1, static_cast<int>(st.y[0] / kTwoPi * B));
      const int by = std::min(B - 1, static_cast<int>(st.y[1] / kTwoPi * B));
      c[k] = bx * B + by;
    }
    values[job] = std::move(v);
    cells[job] = std::move(c);
  });
  rep.means.assign(S, std::vector<std::vector<double>>(K + 1, std::vector<double>(O, 0.0)));
  rep.std_errors = rep.means;
  std::vector<std::vector<Eigen::VectorXd>> hist(S, std::vector<Eigen::VectorXd>(K + 1, Eigen::VectorXd::Zero(B * B)));
  for (int si = 0; si < S; ++si)
    for (int k = 0; k <= K; ++k) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(O), sq = Eigen::VectorXd::Zero(O);
      for (int t = 0; t < T; ++t) {
        const auto& v = values[static_cast<size_t>(si) * T + t];
        sum += v.row(k).transpose();
        hist[si][k][cells[static_cast<size_t>(si) * T + t][k]] += 1.0 / T;
      }
      const Eigen::VectorXd mean = sum / T;
      for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd dv = values[static_cast<size_t>(si) * T + t].row(k).transpose() - mean;
        sq += dv.cwiseProduct(dv);
      }
      for (int o = 0; o < O; ++o) {
        rep.means[si][k][o] = mean[o];
        rep.std_errors[si][k][o] = std::sqrt(sq[o] / (T - 1) / T);
      }
    }
  std::vector<double> ks, ld;
  for (int k = 0; k <= K; ++k) {
    double best = -1.0, floor = 0.0, tv = 0.0;
    for (int a = 0; a < S; ++a)
      for (int b = a + 1; b < S; ++b) {
        double d2 = 0.0, f2 = 0.0;
        for (int o = 0; o < O; ++o) {
          const double dm = rep.means[a][k][o] - rep.means[b][k][o];
          d2 += dm * dm;
          f2 += rep.std_errors[a][k][o] * rep.std_errors[a][k][o] + rep.std_errors[b][k][o] * rep.std_errors[b][k][o];
        }
        if (std::sqrt(d2) > best) {
          best = std::sqrt(d2);
          floor = std::sqrt(f2);
        }
        tv = std::max(tv, 0.5 * (hist[a][k] - hist[b][k]).cwiseAbs().sum());
      }
    rep.discrepancy.push_back(best);
    rep.noise_floor.push_back(floor);
    rep.particle_tv.push_back(tv);
    if (best > 3.0 * floor && best > 0.0) {
      rep.fit_steps.push_back(k);
      ks.push_back(k);
      ld.push_back(std::log(best));
    }
  }
  if (ks.size() < 3) {
    rep.message = "mixing not detected: fewer than 3 steps above the noise floor";
    return rep;
  }
  const LineFit f = fit_line(ks, ld);
  rep.gamma_mix = -f.slope;
  rep.gamma_lower = rep.gamma_mix - 2.0 * f.slope_se;
  rep.gamma_upper = rep.gamma_mix + 2.0 * f.slope_se;
  rep.mixing_detected = rep.gamma_lower > 0.0;
  rep.message = rep.mixing_detected ? "mixing detected" : "mixing not detected: decay not significant";
  return rep;
}

}  // namespace lagranflow
