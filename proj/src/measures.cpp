#include "lagranflow/measures.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "lagranflow/coupling.hpp"
#include "lagranflow/parallel.hpp"

namespace lagranflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int ipow(int b, int e) {
  int r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

int coordinate_cell(double y, int K) {
  const int c = static_cast<int>(std::floor(y / kTwoPi * K));
  return std::min(K - 1, std::max(0, c));
}

// Wrapped Gaussian on [0, 2 pi) with images -1, 0, 1, as a density w.r.t.
// normalized Lebesgue measure.
double wrapped_kernel(double d, double h) {
  const double c = kTwoPi / (std::sqrt(kTwoPi) * h);
  double acc = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double x = (d + k * kTwoPi) / h;
    acc += std::exp(-0.5 * x * x);
  }
  return c * acc;
}

Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a[i] * b;
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string spec_fingerprint(const NoiseSpec& spec, const FlowParams& fp) {
  std::ostringstream os;
  os << "N=" << spec.spatial_cutoff << ";L=" << spec.time_modes << ";kappa=" << fmt17(spec.kappa)
     << ";beta=" << fmt17(spec.beta) << ";c0=" << fmt17(spec.c0) << ";delta=" << fmt17(spec.delta)
     << ";a=" << fmt17(spec.amplification) << ";s=" << spec.sobolev_s << ";density=" << spec.density
     << ";nu=" << fmt17(fp.nu) << ";substeps=" << fp.substeps;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ParticleSamples run_ensemble(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp, int t, int n,
                             std::uint64_t seed, int workers, std::uint64_t stream_offset) {
  if (t < 1 || n < 1) throw std::invalid_argument("ensemble needs t >= 1 and n >= 1");
  ParticleSamples out;
  out.t = t;
  out.y.resize(n, 2 * t);
  out.initial = s;
  out.spec_hash = spec_fingerprint(spec, fp);
  out.seed = seed;
  out.stream_offset = stream_offset;
  parallel_for(n, workers, [&](int i) {
    ChainOptions co;
    co.stream_index = stream_offset + static_cast<std::uint64_t>(i);
    const Trajectory tr = run_chain(s, spec, fp, seed, t, co);
    for (int k = 0; k < t; ++k) out.y.block(i, 2 * k, 1, 2) = tr.states[k + 1].y.transpose();
  });
  return out;
}

ParticleSamples stationary_windows(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp, int t,
                                   int count, int burn_in, std::uint64_t seed, std::uint64_t stream_index) {
  if (t < 1 || count < 1 || burn_in < 0) throw std::invalid_argument("windows need t >= 1, count >= 1");
  ChainOptions co;
  co.stream_index = stream_index;
  const Trajectory tr = run_chain(s, spec, fp, seed, burn_in + count + t - 1, co);
  ParticleSamples out;
  out.t = t;
  out.y.resize(count, 2 * t);
  out.initial = s;
  out.spec_hash = spec_fingerprint(spec, fp);
  out.seed = seed;
  out.stream_offset = stream_index;
  for (int k = 0; k < count; ++k)
    for (int j = 0; j < t; ++j) out.y.block(k, 2 * j, 1, 2) = tr.states[burn_in + k + 1 + j].y.transpose();
  return out;
}

int DensityEstimate::cell_of(const Eigen::VectorXd& p) const {
  if (p.size() != dimension()) throw std::invalid_argument("point dimension does not match the estimate");
  int idx = 0;
  for (int c = 0; c < dimension(); ++c) idx = idx * resolution + coordinate_cell(p[c], resolution);
  return idx;
}

Eigen::VectorXd DensityEstimate::cell_center(int index) const {
  Eigen::VectorXd p(dimension());
  for (int c = dimension() - 1; c >= 0; --c) {
    p[c] = (index % resolution + 0.5) * kTwoPi / resolution;
    index /= resolution;
  }
  return p;
}

double DensityEstimate::at(const Eigen::VectorXd& p) const {
  if (method == DensityMethod::kHistogram) return values[cell_of(p)];
  if (p.size() != dimension()) throw std::invalid_argument("point dimension does not match the estimate");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    double w = 1.0;
    for (int c = 0; c < dimension() && w > 0.0; ++c) w *= wrapped_kernel(p[c] - samples(i, c), bandwidth);
    acc += w;
  }
  return normalization * acc / static_cast<double>(samples.rows());
}

DensityEstimate estimate_density(const ParticleSamples& s, const DensityOptions& opts) {
  const int n = s.n();
  if (n < 1) throw std::invalid_argument("no samples");
  DensityEstimate e;
  e.method = opts.method;
  e.t = s.t;
  e.n = n;
  const int D = 2 * s.t;
  if (opts.method == DensityMethod::kHistogram) {
    const int K = opts.bins;
    if (K < 1 || K > 16) throw std::invalid_argument("histogram bins must be in [1, 16]");
    e.resolution = K;
    const int cells = ipow(K, D);
    e.counts = Eigen::VectorXi::Zero(cells);
    for (int i = 0; i < n; ++i) ++e.counts[e.cell_of(s.y.row(i).transpose())];
    const Eigen::ArrayXd p = e.counts.cast<double>().array() / n;
    e.values = (p * cells).matrix();
    e.std_errors = ((p * (1.0 - p) / n).sqrt() * cells).matrix();
    e.under_resolved = static_cast<double>(n) / cells < 5.0;
    return e;
  }
  if (s.t > 3) throw std::invalid_argument("KDE supports t <= 3");
  const int G = opts.grid;
  if (G < 2) throw std::invalid_argument("KDE grid must have >= 2 points per coordinate");
  e.resolution = G;
  e.bandwidth = opts.bandwidth > 0.0 ? opts.bandwidth : std::pow(static_cast<double>(n), -1.0 / (D + 4));
  const int cells = ipow(G, D);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cells), sq = Eigen::VectorXd::Zero(cells);
  Eigen::VectorXd w(G);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Ones(1);
    for (int c = 0; c < D; ++c) {
      for (int g = 0; g < G; ++g) w[g] = wrapped_kernel((g + 0.5) * kTwoPi / G - s.y(i, c), e.bandwidth);
      acc = kron(acc, w);
    }
    sum += acc;
    sq += acc.cwiseProduct(acc);
  }
  const Eigen::VectorXd mean = sum / n;
  e.normalization = 1.0 / mean.mean();
  e.values = e.normalization * mean;
  const Eigen::ArrayXd var = (sq.array() / n - mean.array().square()).max(0.0);
  e.std_errors = (e.normalization * (var / n).sqrt()).matrix();
  e.under_resolved = n * std::pow(2.0 * e.bandwidth / kTwoPi, D) < 5.0;
  e.samples = s.y.leftCols(D);
  return e;
}

std::pair<double, double> clopper_pearson(int k, int n, double alpha) {
  if (n < 1 || k < 0 || k > n) throw std::invalid_argument("invalid binomial counts");
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1, alpha / 2);
  const double hi = k == n ? 1.0 : boost::math::ibeta_inv(k + 1, n - k, 1.0 - alpha / 2);
  return {lo, hi};
}

DensityExtrema density_extrema(const NoiseSpec& spec, const FlowParams& fp, const std::vector<SystemState>& states,
                               int bins, int n_per_state, std::uint64_t seed, int workers, double alpha) {
  if (states.empty()) throw std::invalid_argument("no initial states");
  DensityExtrema ex;
  ex.confidence = 1.0 - alpha;
  DensityOptions o;
  o.bins = bins;
  for (size_t si = 0; si < states.size(); ++si) {
    const ParticleSamples s =
        run_ensemble(states[si], spec, fp, 1, n_per_state, seed, workers, si * static_cast<std::uint64_t>(n_per_state));
    ex.estimates.push_back(estimate_density(s, o));
    ex.under_resolved = ex.under_resolved || ex.estimates.back().under_resolved;
  }
  const int cells = ex.estimates[0].cells();
  double level = alpha / (static_cast<double>(cells) * states.size());
  if (ex.under_resolved) level /= 10.0;
  ex.m_hat = kInf;
  ex.M_hat = -kInf;
  ex.m_lower = ex.m_upper = kInf;
  ex.M_lower = ex.M_upper = -kInf;
  for (size_t si = 0; si < states.size(); ++si) {
    const DensityEstimate& e = ex.estimates[si];
    for (int c = 0; c < cells; ++c) {
      const double v = e.values[c];
      const auto [lo, hi] = clopper_pearson(e.counts[c], e.n, level);
      if (v < ex.m_hat) {
        ex.m_hat = v;
        ex.argmin_state = static_cast<int>(si);
        ex.argmin_cell = c;
      }
      if (v > ex.M_hat) {
        ex.M_hat = v;
        ex.argmax_state = static_cast<int>(si);
        ex.argmax_cell = c;
      }
      ex.m_lower = std::min(ex.m_lower, lo * cells);
      ex.m_upper = std::min(ex.m_upper, hi * cells);
      ex.M_lower = std::max(ex.M_lower, lo * cells);
      ex.M_upper = std::max(ex.M_upper, hi * cells);
    }
  }
  return ex;
}

namespace {

std::string ordering_message(const Eigen::VectorXd& p) {
  std::ostringstream os;
  os.precision(17);
  os << "density vanishes at ordering (";
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

}  // namespace

UndefinedEntropyProduction::UndefinedEntropyProduction(const Eigen::VectorXd& ordering)
    : std::domain_error(ordering_message(ordering)), ordering_(ordering) {}

Eigen::VectorXd reversed_path(const Eigen::VectorXd& path) {
  if (path.size() % 2 != 0) throw std::invalid_argument("path must hold pairs of coordinates");
  const Eigen::Index t = path.size() / 2;
  Eigen::VectorXd r(path.size());
  for (Eigen::Index k = 0; k < t; ++k) r.segment(2 * k, 2) = path.segment(2 * (t - 1 - k), 2);
  return r;
}

double entropy_production(const DensityEstimate& rho, const Eigen::VectorXd& path) {
  const Eigen::VectorXd rev = reversed_path(path);
  const double a = rho.at(path), b = rho.at(rev);
  if (!(a > 0.0)) throw UndefinedEntropyProduction(path);
  if (!(b > 0.0)) throw UndefinedEntropyProduction(rev);
  return std::log(a) - std::log(b);
}

double ep_bound(double m_hat, double M_hat) {
  if (!(m_hat > 0.0) || M_hat < m_hat) throw std::invalid_argument("bound needs 0 < m <= M");
  return std::log(M_hat / m_hat);
}

EpBoundCheck ep_bound_check(const DensityEstimate& rho, const ParticleSamples& paths, double m_hat, double M_hat,
                            double slack) {
  EpBoundCheck c;
  c.bound = ep_bound(m_hat, M_hat);
  c.slack = slack;
  c.paths = paths.n();
  for (int i = 0; i < paths.n(); ++i) {
    try {
      const double s = entropy_production(rho, paths.y.row(i).transpose());
      c.sigma.push_back(s);
      const double per = std::abs(s) / paths.t;
      c.max_abs = std::max(c.max_abs, per);
      c.within += per <= c.bound + slack;
    } catch (const UndefinedEntropyProduction&) {
      ++c.undefined;
      c.sigma.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return c;
}

StationarityReport stationarity_from_samples(const std::vector<Vec2>& y, const std::vector<double>& energy,
                                             const StationarityOptions& opts) {
  const int n = static_cast<int>(y.size());
  const int K = opts.bins;
  if (n < 2 || K < 1) throw std::invalid_argument("stationarity needs samples and bins");
  if (!energy.empty() && static_cast<int>(energy.size()) != n) throw std::invalid_argument("energy length mismatch");
  StationarityReport r;
  r.n = n;
  const int cells = K * K;
  std::vector<int> cell(n);
  r.counts = Eigen::VectorXi::Zero(cells);
  for (int i = 0; i < n; ++i) {
    cell[i] = coordinate_cell(y[i][0], K) * K + coordinate_cell(y[i][1], K);
    ++r.counts[cell[i]];
  }
  const double expected = static_cast<double>(n) / cells;
  for (int c = 0; c < cells; ++c) r.chi_square += (r.counts[c] - expected) * (r.counts[c] - expected) / expected;
  r.dof = cells - 1;
  if (r.dof > 0) {
    const boost::math::chi_squared dist(r.dof);
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.chi_square));
    const int B = std::max(2, std::min(opts.batches, n / 2));
    const int L = n / B;
    Eigen::MatrixXd batch = Eigen::MatrixXd::Zero(cells, B);
    for (int b = 0; b < B; ++b)
      for (int i = b * L; i < (b + 1) * L; ++i) batch(cell[i], b) += 1.0 / L;
    double acc = 0.0;
    int used = 0;
    for (int c = 0; c < cells; ++c) {
      const double p = batch.row(c).mean();
      if (p <= 0.0 || p >= 1.0) continue;
      const double v = (batch.row(c).array() - p).square().sum() / (B - 1);
      acc += L * v / (p * (1.0 - p));
      ++used;
    }
    r.inflation = used > 0 ? acc / used : 1.0;
    r.p_value_corrected = boost::math::cdf(boost::math::complement(dist, r.chi_square / r.inflation));
  } else {
    r.p_value = r.p_value_corrected = 1.0;
  }
  for (int m1 = 0; m1 <= opts.harmonic_radius; ++m1)
    for (int m2 = -opts.harmonic_radius; m2 <= opts.harmonic_radius; ++m2) {
      const Mode m{m1, m2};
      if (m.positive()) r.harmonics.push_back(m);
    }
  r.harmonic_bound = 4.0 / std::sqrt(static_cast<double>(n));
  r.correlation_bound = 3.0 / std::sqrt(static_cast<double>(n));
  double em = 0.0, ev = 0.0;
  if (!energy.empty()) {
    for (double e : energy) em += e;
    em /= n;
    for (double e : energy) ev += (e - em) * (e - em);
  }
  for (const Mode& m : r.harmonics) {
    double cs = 0.0, sn = 0.0;
    std::vector<double> cv(n), sv(n);
    for (int i = 0; i < n; ++i) {
      const double ph = m.j1 * y[i][0] + m.j2 * y[i][1];
      cv[i] = std::cos(ph);
      sv[i] = std::sin(ph);
      cs += cv[i];
      sn += sv[i];
    }
    r.harmonic_abs.push_back(std::hypot(cs, sn) / n);
    r.max_harmonic = std::max(r.max_harmonic, r.harmonic_abs.back());
    if (energy.empty() || ev <= 0.0) continue;
    for (const auto* series : {&cv, &sv}) {
      const double mean = (series == &cv ? cs : sn) / n;
      double cov = 0.0, var = 0.0;
      for (int i = 0; i < n; ++i) {
        cov += (energy[i] - em) * ((*series)[i] - mean);
        var += ((*series)[i] - mean) * ((*series)[i] - mean);
      }
      const double corr = var > 0.0 ? cov / std::sqrt(ev * var) : 0.0;
      r.energy_correlation.push_back(corr);
      r.max_correlation = std::max(r.max_correlation, std::abs(corr));
    }
  }
  return r;
}

StationarityReport stationarity_report(const SystemState& s, const NoiseSpec& spec, const FlowParams& fp,
                                       const StationarityOptions& opts) {
  if (opts.horizon < 2 || opts.burn_in < 0) throw std::invalid_argument("horizon must be >= 2");
  ChainOptions co;
  co.stream_index = opts.stream_index;
  const Trajectory tr = run_chain(s, spec, fp, opts.seed, opts.burn_in + opts.horizon, co);
  std::vector<Vec2> y;
  std::vector<double> en;
  y.reserve(opts.horizon);
  en.reserve(opts.horizon);
  for (int k = opts.burn_in + 1; k <= opts.burn_in + opts.horizon; ++k) {
    y.push_back(tr.states[k].y);
    en.push_back(energy(tr.states[k].u));
  }
  return stationarity_from_samples(y, en, opts);
}

std::pair<double, double> sup_discrepancy(const DensityEstimate& a, const DensityEstimate& b) {
  if (a.cells() != b.cells() || a.t != b.t) throw std::invalid_argument("estimates live on different grids");
  const double z = std::max(3.0, std::sqrt(2.0 * std::log(2.0 * a.cells())));
  double d = 0.0, f = 0.0;
  for (int c = 0; c < a.cells(); ++c) {
    d = std::max(d, std::abs(a.values[c] - b.values[c]));
    f = std::max(f, z * std::hypot(a.std_errors[c], b.std_errors[c]));
  }
  return {d, f};
}

ConvergenceReport convergence_report(const NoiseSpec& spec, const FlowParams& fp,
                                     const std::vector<SystemState>& states, const ConvergenceOptions& opts) {
  if (opts.t < 1 || opts.t > 2) throw std::invalid_argument("convergence report supports t in {1, 2}");
  if (states.empty() || opts.windows.empty() || opts.trajectories < 2)
    throw std::invalid_argument("convergence report needs states, windows and trajectories");
  const int S = static_cast<int>(states.size()), T = opts.trajectories, t = opts.t;
  const int W = static_cast<int>(opts.windows.size());
  int horizon = opts.reference_window;
  for (int n : opts.windows) {
    if (n < 0) throw std::invalid_argument("windows must be >= 0");
    horizon = std::max(horizon, n);
  }
  horizon += t;
  // rows: state-major trajectories; blocks of 2t columns per window, reference last.
  Eigen::MatrixXd data(static_cast<Eigen::Index>(S) * T, 2 * t * (W + 1));
  parallel_for(S * T, opts.workers, [&](int job) {
    ChainOptions co;
    co.stream_index = static_cast<std::uint64_t>(job);
    const Trajectory tr = run_chain(states[job / T], spec, fp, opts.seed, horizon, co);
    for (int w = 0; w <= W; ++w) {
      const int n = w < W ? opts.windows[w] : opts.reference_window;
      for (int j = 0; j < t; ++j) data.block(job, 2 * t * w + 2 * j, 1, 2) = tr.states[n + 1 + j].y.transpose();
    }
  });
  DensityOptions o;
  o.bins = opts.bins;
  ParticleSamples ref;
  ref.t = t;
  ref.y = data.rightCols(2 * t);
  const DensityEstimate rho_ref = estimate_density(ref, o);
  ConvergenceReport rep;
  rep.windows = opts.windows;
  std::vector<double> xs, ys;
  for (int w = 0; w < W; ++w) {
    double d = 0.0, f = 0.0;
    for (int si = 0; si < S; ++si) {
      ParticleSamples ps;
      ps.t = t;
      ps.y = data.block(static_cast<Eigen::Index>(si) * T, 2 * t * w, T, 2 * t);
      const auto [ds, fs] = sup_discrepancy(estimate_density(ps, o), rho_ref);
      if (ds > d) {
        d = ds;
        f = fs;
      }
    }
    rep.discrepancy.push_back(d);
    rep.noise_floor.push_back(f);
    if (d > f) {
      rep.fit_windows.push_back(opts.windows[w]);
      xs.push_back(opts.windows[w]);
      ys.push_back(std::log(d));
    }
  }
  if (xs.size() < 3) {
    rep.message = "inconclusive: fewer than 3 windows above the noise floor";
    return rep;
  }
  const LineFit fit = fit_line(xs, ys);
  rep.rate = -fit.slope;
  rep.rate_lower = rep.rate - 2.0 * fit.slope_se;
  rep.rate_upper = rep.rate + 2.0 * fit.slope_se;
  rep.inconclusive = !(rep.rate_lower > 0.0);
  rep.message = rep.inconclusive ? "inconclusive: decay not significant" : "exponential decay detected";
  return rep;
}

EmpiricalMeasure empirical_measure(const Trajectory& tr, int r) {
  const int N = static_cast<int>(tr.states.size());
  if (r < 1 || r > N) throw std::invalid_argument("window length must be in [1, number of states]");
  EmpiricalMeasure m;
  m.r = r;
  for (int j = 0; j < r; ++j)
    for (const char* f : {"energy", "enstrophy", "y1", "y2"}) m.features.push_back(std::string(f) + "_" + std::to_string(j));
  const int count = N - r + 1;
  m.points.resize(count, 4 * r);
  for (int k = 0; k < count; ++k)
    for (int j = 0; j < r; ++j) {
      const SystemState& s = tr.states[k + j];
      m.points.block(k, 4 * j, 1, 4) << energy(s.u), enstrophy(s.u), s.y[0], s.y[1];
    }
  m.weights = Eigen::VectorXd::Constant(count, 1.0 / count);
  return m;
}

}  // namespace lagranflow
