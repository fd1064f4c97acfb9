#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lagranflow/cli_io.hpp"

using namespace lagranflow;

namespace {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path, bool config) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    if (config) throw ConfigError(path, -2, "cannot read file");
    throw IoError(path, "cannot read file");
  }
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<SystemState> states_from(const ExperimentConfig& cfg, const std::string& key,
                                     std::vector<Vec2> fallback) {
  const std::vector<double> v = cfg.get_doubles(key);
  std::vector<Vec2> pts;
  for (size_t i = 0; i + 1 < v.size(); i += 2) pts.emplace_back(v[i], v[i + 1]);
  if (pts.empty()) pts = std::move(fallback);
  std::vector<SystemState> out;
  for (const Vec2& p : pts) out.push_back(SystemState::rest(cfg.get_int("grid.spatial_cutoff"), p));
  return out;
}

json state_points(const std::vector<SystemState>& st) {
  json a = json::array();
  for (const SystemState& s : st) a.push_back({s.y[0], s.y[1]});
  return a;
}

// Writes outputs under the configured directory and keeps the manifest.
class Run {
 public:
  Run(std::string subcommand, const ExperimentConfig& cfg)
      : cfg_(cfg), dir_(cfg.get_string("output.directory")), start_(std::chrono::steady_clock::now()) {
    m_.subcommand = std::move(subcommand);
    m_.config_hash = cfg.content_hash();
    m_.config_text = cfg.canonical_text();
    m_.master_seed = cfg.seed();
    m_.seed_source = cfg.value("run.seed").source;
    m_.spec_hash = spec_fingerprint(cfg.noise(), cfg.flow());
    m_.started_at = utc_now();
  }

  const ExperimentConfig& cfg() const { return cfg_; }

  void stream(const std::string& stage, StreamTag tag, std::uint64_t first, std::uint64_t count) {
    m_.streams.push_back({stage, tag, first, count});
  }

  void write_manifest() { write_json_file(path("manifest.json"), m_); }

  void finish() {
    m_.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_manifest();
  }

  void csv(const std::string& name, const CsvTable& t) {
    if (!cfg_.has_format("csv")) return;
    write_text_file(path(name), t.text());
    m_.outputs.push_back(name);
  }

  void json_file(const std::string& name, const json& j) {
    if (!cfg_.has_format("json")) return;
    write_json_file(path(name), j);
    m_.outputs.push_back(name);
  }

  // Plot scripts read only CSV files written by this run.
  void plot(const std::string& name, const std::string& script) {
    if (!cfg_.get_bool("output.plots") || !cfg_.has_format("csv")) return;
    write_text_file(path(name), script);
    m_.outputs.push_back(name);
  }

 private:
  std::string path(const std::string& name) const { return (std::filesystem::path(dir_) / name).string(); }

  const ExperimentConfig& cfg_;
  std::string dir_;
  RunManifest m_;
  std::chrono::steady_clock::time_point start_;
};

const char* kPlotHeader =
    "import sys\n"
    "import numpy as np\n"
    "import matplotlib\n"
    "matplotlib.use('Agg')\n"
    "import matplotlib.pyplot as plt\n"
    "import os\n"
    "here = os.path.dirname(os.path.abspath(__file__))\n"
    "def load(name):\n"
    "    return np.genfromtxt(os.path.join(here, name), delimiter=',', names=True)\n";

void cmd_simulate(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const int K = cfg.get_int("run.kicks");
  run.stream("kicks", StreamTag::kKicks, 0, 1);
  run.write_manifest();
  const Trajectory tr = run_chain(cfg.initial_state(), cfg.noise(), cfg.flow(), cfg.seed(), K);
  CsvTable t("trajectory");
  for (int k = 0; k <= K; ++k) {
    const SystemState& s = tr.states[k];
    t.row({double(k), s.y[0], s.y[1], energy(s.u), enstrophy(s.u), sobolev_norm(s.u, 3.0)});
  }
  run.csv("trajectory.csv", t);
  if (cfg.get_bool("simulate.coefficients")) {
    json j;
    json modes = json::array();
    for (const Mode& m : tr.states[0].u.modes().modes()) modes.push_back({m.j1, m.j2});
    j["modes"] = modes;
    json states = json::array();
    for (int k = 0; k <= K; ++k) {
      json c = json::array();
      for (Eigen::Index i = 0; i < tr.states[k].u.coeffs().size(); ++i) c.push_back(tr.states[k].u.coeffs()[i]);
      states.push_back({{"k", k}, {"y", {tr.states[k].y[0], tr.states[k].y[1]}}, {"u", c}});
    }
    j["states"] = states;
    run.json_file("coefficients.json", j);
  }
  run.plot("plot_trajectory.py", std::string(kPlotHeader) +
                                     "d = load('trajectory.csv')\n"
                                     "fig, ax = plt.subplots(1, 2, figsize=(10, 4))\n"
                                     "ax[0].plot(d['y1'], d['y2'], '.-', ms=2)\n"
                                     "ax[0].set_xlabel('y1'); ax[0].set_ylabel('y2')\n"
                                     "ax[1].semilogy(d['k'], d['energy'] + 1e-300)\n"
                                     "ax[1].set_xlabel('k'); ax[1].set_ylabel('energy')\n"
                                     "fig.savefig(os.path.join(here, 'trajectory.png'), dpi=120)\n");
}

void control_rows(CsvTable& t, const ControlSignal& c) {
  const ControlSignal sp = c.kind() == ControlSignal::Kind::kSpectral ? c : c.to_spectral(256);
  for (size_t i = 0; i < sp.support().size(); ++i)
    for (int l = 1; l <= sp.time_modes(); ++l)
      t.row({double(sp.support()[i].j1), double(sp.support()[i].j2), double(l), sp.data()(i, l - 1)});
}

int cmd_steer(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  run.write_manifest();
  const NoiseSpec spec = cfg.noise();
  const FlowParams fp = cfg.flow();
  const SystemState s0 = cfg.initial_state();
  const Vec2 target(cfg.get_double("steer.target_y1"), cfg.get_double("steer.target_y2"));
  ControlSignal control;
  SteeringReport rep;
  json j;
  if (cfg.get_string("steer.method") == "exact") {
    FixpointOptions o;
    o.kappa = cfg.get_double("steer.kappa");
    o.max_iterations = cfg.get_int("steer.max_iterations");
    o.tolerance = cfg.get_double("steer.tolerance");
    const ExactSteering ex = exact_steer_fixpoint(s0, target, spec, fp, o);
    control = ex.control;
    rep = ex.report;
    j["fixed_point"] = {ex.fixed_point[0], ex.fixed_point[1]};
  } else {
    const ParticleSteering ps = steer_particle_control(s0.y, target, fp.nu);
    control = ps.control;
    const SystemState e = step_map(s0, control, fp);
    rep.endpoint_error = torus_distance(e.y, wrap_point(target));
    rep.endpoint_field_norm = sobolev_norm(e.u, spec.sobolev_s);
    rep.max_off_support = off_support_leakage(control);
    rep.decay = coefficient_decay(control);
    rep.margins = support_margins(spec, control);
    rep.converged = true;
    rep.status = "transport";
  }
  j["method"] = cfg.get_string("steer.method");
  j["initial"] = {s0.y[0], s0.y[1]};
  j["target"] = {target[0], target[1]};
  j["report"] = rep;
  run.json_file("steer.json", j);
  CsvTable t("control");
  control_rows(t, control);
  run.csv("control.csv", t);
  if (!rep.converged) throw NumericalFailure("steering did not converge: " + rep.status);
  return 0;
}

void cmd_linctl(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const NoiseSpec spec = cfg.noise();
  const FlowParams fp = cfg.flow();
  const int burn = cfg.get_int("run.burn_in");
  run.stream("base chain", StreamTag::kKicks, 0, 1);
  run.stream("field target", StreamTag::kSynthetic, 0, 1);
  run.write_manifest();
  ChainOptions co;
  co.keep_kicks = true;
  const Trajectory tr = run_chain(cfg.initial_state(), spec, fp, cfg.seed(), burn + 1, co);
  const SystemState& s = tr.states[burn];
  const ControlSignal forcing = tr.kicks[burn].to_signal(spec);
  CounterRng rng = CounterRng::stream(cfg.seed(), StreamTag::kSynthetic, 0);
  FourierField vh(spec.spatial_cutoff);
  for (Eigen::Index i = 0; i < vh.coeffs().size(); ++i) vh.coeffs()[i] = rng.uniform(-1.0, 1.0);
  const double scale = cfg.get_double("linctl.v_scale");
  vh.coeffs() *= vh.coeffs().norm() > 0 ? scale / vh.coeffs().norm() : 0.0;
  const Vec2 qh(cfg.get_double("linctl.q1"), cfg.get_double("linctl.q2"));
  const LinearSteering ls = steer_linearized(s, forcing, vh, qh, cfg.get_double("linctl.delta"), fp);
  json j;
  j["base_kick"] = burn + 1;
  j["delta"] = cfg.get_double("linctl.delta");
  j["q_target"] = {qh[0], qh[1]};
  j["v_target_norm"] = vh.coeffs().norm();
  j["v_error"] = ls.v_error;
  j["z_error"] = ls.z_error;
  j["z1"] = {ls.z1[0], ls.z1[1]};
  json sup = json::array();
  for (const Mode& m : ls.zeta.support()) sup.push_back({m.j1, m.j2});
  j["zeta_support"] = sup;
  j["zeta_nodes"] = ls.zeta.node_count();
  json vals = json::array();
  for (Eigen::Index i = 0; i < ls.zeta.data().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < ls.zeta.data().cols(); ++k) row.push_back(ls.zeta.data()(i, k));
    vals.push_back(row);
  }
  j["zeta_values"] = vals;
  run.json_file("linctl.json", j);
}

void cmd_couple(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const int pairs = cfg.get_int("couple.pairs"), K = cfg.get_int("couple.steps");
  const std::vector<double> d0 = cfg.get_doubles("couple.d0");
  CouplingOptions o;
  o.kind = cfg.get_string("couple.kind") == "maximal" ? CouplingKind::kMaximal : CouplingKind::kSynchronous;
  o.q = cfg.get_double("couple.q");
  o.shift.control_time_modes = cfg.get_int("couple.control_time_modes");
  o.shift.gamma = cfg.get_double("couple.gamma");
  o.shift.locality_radius = cfg.get_double("couple.locality_radius");
  run.stream("base chain", StreamTag::kKicks, 0, 1);
  run.stream("pair kicks", StreamTag::kKicks, 1, pairs);
  run.stream("perturbations", StreamTag::kCoupling, 0, pairs);
  run.stream("coupling decisions", StreamTag::kCoupling, std::uint64_t(1) << 40, pairs + 1);
  run.write_manifest();
  const CouplingExperiment ex = coupling_experiment(cfg.noise(), cfg.flow(), d0, pairs, K, o, cfg.seed(),
                                                    cfg.get_int("run.burn_in"), cfg.get_int("run.workers"));
  json j;
  j["kind"] = cfg.get_string("couple.kind");
  j["q"] = o.q;
  j["steps"] = K;
  j["pairs"] = pairs;
  j["experiment"] = ex;
  run.json_file("couple.json", j);
  CsvTable t("coupling_pairs");
  for (size_t p = 0; p < ex.reports.size(); ++p) {
    const CouplingReport& r = ex.reports[p];
    for (size_t k = 0; k < r.distances.size(); ++k)
      t.row({double(p), double(k), r.distances[k], k == 0 ? 1.0 : (r.contraction[k - 1] ? 1.0 : 0.0)});
  }
  run.csv("coupling_pairs.csv", t);
  run.plot("plot_coupling.py", std::string(kPlotHeader) +
                                   "d = load('coupling_pairs.csv')\n"
                                   "fig, ax = plt.subplots(figsize=(6, 4))\n"
                                   "for p in np.unique(d['pair_id'])[:50]:\n"
                                   "    s = d[d['pair_id'] == p]\n"
                                   "    ax.semilogy(s['k'], np.maximum(s['d_k'], 1e-18), lw=0.5)\n"
                                   "ax.set_xlabel('k'); ax.set_ylabel('d_k')\n"
                                   "fig.savefig(os.path.join(here, 'coupling.png'), dpi=120)\n");
}

void density_rows(CsvTable& t, const DensityEstimate& e) {
  for (int c = 0; c < e.cells(); ++c) {
    std::vector<double> row{double(c)};
    const Eigen::VectorXd x = e.cell_center(c);
    for (Eigen::Index i = 0; i < x.size(); ++i) row.push_back(x[i]);
    row.push_back(e.values[c]);
    row.push_back(e.std_errors[c]);
    row.push_back(e.counts.size() ? double(e.counts[c]) : std::nan(""));
    t.row(row);
  }
}

std::string density_plot(const std::string& csv, const std::string& png) {
  return std::string(kPlotHeader) + "d = load('" + csv +
         "')\n"
         "k = int(round(np.sqrt(len(d))))\n"
         "if k * k == len(d):\n"
         "    fig, ax = plt.subplots(figsize=(5, 4))\n"
         "    im = ax.imshow(d['value'].reshape(k, k).T, origin='lower', extent=[0, 2*np.pi, 0, 2*np.pi])\n"
         "    fig.colorbar(im); ax.set_xlabel('y1'); ax.set_ylabel('y2')\n"
         "    fig.savefig(os.path.join(here, '" +
         png + "'), dpi=120)\n";
}

void cmd_density(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const std::vector<SystemState> st =
      states_from(cfg, "density.states", {Vec2(cfg.get_double("run.y1"), cfg.get_double("run.y2"))});
  const int n = cfg.get_int("run.trajectories"), t = cfg.get_int("density.t");
  DensityOptions o;
  o.method = cfg.get_string("density.method") == "kde" ? DensityMethod::kKde : DensityMethod::kHistogram;
  o.bins = cfg.get_int("density.bins");
  o.grid = cfg.get_int("density.grid");
  o.bandwidth = cfg.get_double("density.bandwidth");
  run.stream("ensembles", StreamTag::kKicks, 0, std::uint64_t(n) * st.size());
  run.write_manifest();
  json j;
  j["states"] = state_points(st);
  std::vector<DensityEstimate> est;
  if (o.method == DensityMethod::kHistogram && t == 1) {
    const DensityExtrema ex = density_extrema(cfg.noise(), cfg.flow(), st, o.bins, n, cfg.seed(),
                                              cfg.get_int("run.workers"), cfg.get_double("density.alpha"));
    j["extrema"] = ex;
    est = ex.estimates;
  } else {
    for (size_t si = 0; si < st.size(); ++si)
      est.push_back(estimate_density(run_ensemble(st[si], cfg.noise(), cfg.flow(), t, n, cfg.seed(),
                                                  cfg.get_int("run.workers"), si * std::uint64_t(n)),
                                     o));
  }
  json side = json::array();
  for (size_t si = 0; si < est.size(); ++si) {
    json s = density_sidecar(est[si]);
    s["file"] = "density_" + std::to_string(si) + ".csv";
    side.push_back(s);
    CsvTable tab("density" + std::to_string(t));
    density_rows(tab, est[si]);
    run.csv(s["file"].get<std::string>(), tab);
  }
  j["estimates"] = side;
  run.json_file("density.json", j);
  if (t == 1) run.plot("plot_density.py", density_plot("density_0.csv", "density_0.png"));
}

void cmd_ep(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const std::vector<SystemState> st =
      states_from(cfg, "ep.states", {Vec2(cfg.get_double("run.y1"), cfg.get_double("run.y2"))});
  const int ne = cfg.get_int("ep.extrema_samples"), t = cfg.get_int("ep.t");
  const std::uint64_t base = std::uint64_t(ne) * st.size();
  run.stream("extrema ensembles", StreamTag::kKicks, 0, base);
  run.stream("estimation chain", StreamTag::kKicks, base, 1);
  run.stream("check chain", StreamTag::kKicks, base + 1, 1);
  run.write_manifest();
  const NoiseSpec spec = cfg.noise();
  const FlowParams fp = cfg.flow();
  const DensityExtrema ex =
      density_extrema(spec, fp, st, cfg.get_int("ep.extrema_bins"), ne, cfg.seed(), cfg.get_int("run.workers"));
  json j;
  j["states"] = state_points(st);
  j["extrema"] = ex;
  DensityOptions o;
  o.method = cfg.get_string("ep.method") == "kde" ? DensityMethod::kKde : DensityMethod::kHistogram;
  o.bins = cfg.get_int("ep.bins");
  o.grid = cfg.get_int("ep.grid");
  const int burn = cfg.get_int("run.burn_in");
  const DensityEstimate rho = estimate_density(
      stationary_windows(cfg.initial_state(), spec, fp, t, cfg.get_int("run.trajectories"), burn, cfg.seed(), base),
      o);
  j["rho"] = density_sidecar(rho);
  if (!(ex.m_hat > 0.0)) {
    run.json_file("ep.json", j);
    throw NumericalFailure("estimated density minimum is zero; the bound log(M/m) is undefined");
  }
  const ParticleSamples paths =
      stationary_windows(cfg.initial_state(), spec, fp, t, cfg.get_int("ep.paths"), burn, cfg.seed(), base + 1);
  EpBoundCheck c = ep_bound_check(rho, paths, ex.m_hat, ex.M_hat, cfg.get_double("ep.slack"));
  CsvTable tab("sigma");
  for (size_t i = 0; i < c.sigma.size(); ++i) tab.row({double(i), c.sigma[i]});
  run.csv("sigma.csv", tab);
  c.sigma.clear();
  j["check"] = c;
  j["fraction_within"] = c.fraction();
  run.json_file("ep.json", j);
}

void cmd_stationarity(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  StationarityOptions o;
  o.burn_in = cfg.get_int("run.burn_in");
  o.horizon = cfg.get_int("run.kicks");
  o.bins = cfg.get_int("stationarity.bins");
  o.harmonic_radius = cfg.get_int("stationarity.harmonic_radius");
  o.batches = cfg.get_int("stationarity.batches");
  o.seed = cfg.seed();
  run.stream("chain", StreamTag::kKicks, 0, 1);
  run.write_manifest();
  const StationarityReport r = stationarity_report(cfg.initial_state(), cfg.noise(), cfg.flow(), o);
  json j = r;
  j["rejected_at_1pct"] = r.rejected(0.01);
  j["harmonics_ok"] = r.harmonics_ok();
  run.json_file("stationarity.json", j);
  CsvTable t("stationarity_counts");
  for (int c = 0; c < r.counts.size(); ++c) t.row({double(c), double(c / o.bins), double(c % o.bins), double(r.counts[c])});
  run.csv("stationarity_counts.csv", t);
  CsvTable h("harmonics");
  for (size_t i = 0; i < r.harmonics.size(); ++i)
    h.row({double(r.harmonics[i].j1), double(r.harmonics[i].j2), r.harmonic_abs[i]});
  run.csv("harmonics.csv", h);
  run.plot("plot_stationarity.py", std::string(kPlotHeader) +
                                       "d = load('stationarity_counts.csv')\n"
                                       "k = int(d['i1'].max()) + 1\n"
                                       "fig, ax = plt.subplots(figsize=(5, 4))\n"
                                       "im = ax.imshow(d['count'].reshape(k, k).T, origin='lower')\n"
                                       "fig.colorbar(im); ax.set_xlabel('y1 cell'); ax.set_ylabel('y2 cell')\n"
                                       "fig.savefig(os.path.join(here, 'stationarity.png'), dpi=120)\n");
}

void cmd_converge(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  const Vec2 p(cfg.get_double("run.y1"), cfg.get_double("run.y2"));
  const std::vector<SystemState> st = states_from(cfg, "converge.states", {p, p + Vec2(kPi, kPi)});
  ConvergenceOptions o;
  o.t = cfg.get_int("converge.t");
  o.windows = cfg.get_ints("converge.windows");
  o.reference_window = cfg.get_int("converge.reference_window");
  o.trajectories = cfg.get_int("run.trajectories");
  o.bins = cfg.get_int("converge.bins");
  o.workers = cfg.get_int("run.workers");
  o.seed = cfg.seed();
  MixingOptions mo;
  mo.trajectories = o.trajectories;
  mo.K = cfg.get_int("converge.mixing_steps");
  mo.fourier_radius = cfg.get_int("converge.fourier_radius");
  mo.tv_bins = cfg.get_int("converge.tv_bins");
  mo.workers = o.workers;
  // The mixing estimate draws its kicks under a derived master seed.
  mo.seed = CounterRng::stream(cfg.seed(), StreamTag::kInitialState, 1)();
  const std::uint64_t T = o.trajectories;
  run.stream("density ensembles", StreamTag::kKicks, 0, T * st.size());
  run.stream("mixing initial field", StreamTag::kKicks, T * st.size(), 1);
  run.stream("mixing ensembles (derived seed)", StreamTag::kKicks, 0, 2 * T);
  run.write_manifest();
  const NoiseSpec spec = cfg.noise();
  const FlowParams fp = cfg.flow();
  const ConvergenceReport cr = convergence_report(spec, fp, st, o);
  ChainOptions co;
  co.stream_index = T * st.size();
  const Trajectory warm = run_chain(SystemState::rest(spec.spatial_cutoff, p), spec, fp, cfg.seed(),
                                    std::max(1, cfg.get_int("run.burn_in")), co);
  const SystemState excited{warm.states.back().u, wrap_point(p)};
  const MixingReport mr = estimate_mixing_rate(spec, fp, {SystemState::rest(spec.spatial_cutoff, p), excited}, mo);
  json j;
  j["states"] = state_points(st);
  j["convergence"] = cr;
  j["mixing"] = mr;
  run.json_file("converge.json", j);
  CsvTable t("convergence");
  for (size_t i = 0; i < cr.windows.size(); ++i) t.row({double(cr.windows[i]), cr.discrepancy[i], cr.noise_floor[i]});
  run.csv("convergence.csv", t);
  CsvTable m("mixing");
  for (size_t k = 0; k < mr.discrepancy.size(); ++k)
    m.row({double(k), mr.discrepancy[k], mr.noise_floor[k], mr.particle_tv[k]});
  run.csv("mixing.csv", m);
  run.plot("plot_convergence.py", std::string(kPlotHeader) +
                                      "c = load('convergence.csv'); m = load('mixing.csv')\n"
                                      "fig, ax = plt.subplots(1, 2, figsize=(10, 4))\n"
                                      "ax[0].semilogy(c['window'], c['discrepancy'], 'o-', label='discrepancy')\n"
                                      "ax[0].semilogy(c['window'], c['noise_floor'], 'k--', label='noise floor')\n"
                                      "ax[0].set_xlabel('n'); ax[0].legend()\n"
                                      "ax[1].semilogy(m['k'], m['discrepancy'], 'o-', label='observables')\n"
                                      "ax[1].semilogy(m['k'], m['noise_floor'], 'k--')\n"
                                      "ax[1].set_xlabel('k'); ax[1].legend()\n"
                                      "fig.savefig(os.path.join(here, 'convergence.png'), dpi=120)\n");
}

FiniteChain load_chain(const ExperimentConfig& cfg, const std::string& key) {
  const std::string path = cfg.get_string(key);
  if (path.empty()) throw ConfigError(key, -2, "required by this subcommand");
  return read_chain_text(read_file(path, false));
}

void cmd_oracle(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  run.write_manifest();
  const FiniteChain chain = load_chain(cfg, "oracle.chain");
  std::vector<Eigen::VectorXd> pts{chain.stationary()};
  const int np = cfg.get_int("oracle.points");
  for (int i = 1; i < np; ++i)
    pts.push_back(random_probability(chain.size(), CounterRng::stream(cfg.seed(), StreamTag::kSynthetic, i)()));
  const RateFunctionReport r = rate_function_report(chain, pts);
  run.json_file("oracle.json", r);
  CsvTable t("rate_function");
  for (size_t i = 0; i < r.points.size(); ++i) t.row({double(i), r.values_a[i], r.values_b[i]});
  run.csv("rate_function.csv", t);
}

void cmd_gc_check(Run& run) {
  const ExperimentConfig& cfg = run.cfg();
  run.write_manifest();
  const FiniteChain chain = load_chain(cfg, "gc_check.chain");
  const EntropyProductionRate ep(chain);
  double w = cfg.get_double("gc_check.r_max");
  if (w == 0.0) w = 0.95 * std::max(std::abs(ep.r_min()), std::abs(ep.r_max()));
  const int np = cfg.get_int("gc_check.r_points");
  std::vector<double> grid;
  for (int i = 0; i < np; ++i) grid.push_back(-w + 2.0 * w * i / (np - 1));
  const GcReport r = gc_symmetry_check(chain, grid, cfg.get_int("gc_check.level3_samples"), cfg.seed());
  run.json_file("gc.json", r);
  CsvTable t("gc");
  for (size_t i = 0; i < r.r.size(); ++i) {
    const bool fin = std::isfinite(r.rate_pos[i]) && std::isfinite(r.rate_neg[i]);
    t.row({r.r[i], r.rate_pos[i], r.rate_neg[i], fin ? r.rate_neg[i] - r.rate_pos[i] - r.r[i] : std::nan("")});
  }
  run.csv("gc.csv", t);
  run.plot("plot_gc.py", std::string(kPlotHeader) +
                             "d = load('gc.csv')\n"
                             "fig, ax = plt.subplots(figsize=(6, 4))\n"
                             "ax.plot(d['r'], d['rate_pos'], label='I(r)')\n"
                             "ax.plot(d['r'], d['rate_neg'], label='I(-r)')\n"
                             "ax.set_xlabel('r'); ax.legend()\n"
                             "fig.savefig(os.path.join(here, 'gc.png'), dpi=120)\n");
}

void print_keys() {
  for (const KeySpec& k : config_schema()) {
    std::cout << k.key << (k.required ? " (required)" : " = " + k.default_value) << "  # " << k.doc << "\n";
  }
}

void error_json(const std::string& sub, const std::string& type, const std::string& message) {
  json e;
  e["error"] = {{"subcommand", sub}, {"type", type}, {"message", message}};
  std::cerr << e.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kicked Navier-Stokes particle experiments"};
  app.require_subcommand(1);
  std::string config_path, manifest_path;
  std::vector<std::string> sets;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "one kicked chain and its particle trajectory"},
      {"steer", "exact particle steering control"},
      {"linctl", "linearized steering along a noise interval"},
      {"couple", "squeezing coupling experiment"},
      {"density", "particle path densities with confidence bands"},
      {"ep", "entropy production against its density bound"},
      {"stationarity", "uniformity of the stationary particle marginal"},
      {"converge", "density convergence and observable mixing rates"},
      {"oracle", "rate function of a finite chain"},
      {"gc-check", "fluctuation symmetry of a finite chain"},
  };
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("-c,--config", config_path, "experiment config file");
    sub->add_option("--manifest", manifest_path, "re-run the configuration recorded in a manifest");
    sub->add_option("--set", sets, "override, section.key=value")->take_all();
  }
  app.add_subcommand("keys", "list configuration keys and defaults");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  if (sub == "keys") {
    print_keys();
    return 0;
  }
  std::unique_ptr<Run> run;
  try {
    std::string text;
    const char* env = std::getenv(kSeedVariable);
    if (!manifest_path.empty()) {
      try {
        text = json::parse(read_file(manifest_path, true)).get<RunManifest>().config_text;
      } catch (const json::exception& e) {
        throw ConfigError(manifest_path, -2, std::string("unreadable manifest: ") + e.what());
      }
      env = nullptr;
    } else if (!config_path.empty()) {
      text = read_file(config_path, true);
    } else {
      throw ConfigError("--config", -2, "a config file or --manifest is required");
    }
    const ExperimentConfig cfg = ExperimentConfig::from_text(text, sets, env);
    run = std::make_unique<Run>(sub, cfg);
    int status = 0;
    if (sub == "simulate") cmd_simulate(*run);
    else if (sub == "steer") status = cmd_steer(*run);
    else if (sub == "linctl") cmd_linctl(*run);
    else if (sub == "couple") cmd_couple(*run);
    else if (sub == "density") cmd_density(*run);
    else if (sub == "ep") cmd_ep(*run);
    else if (sub == "stationarity") cmd_stationarity(*run);
    else if (sub == "converge") cmd_converge(*run);
    else if (sub == "oracle") cmd_oracle(*run);
    else if (sub == "gc-check") cmd_gc_check(*run);
    run->finish();
    return status;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    error_json(sub, "io", e.what());
    return 1;
  } catch (const NumericalFailure& e) {
    if (run) run->finish();
    error_json(sub, "numerical", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_json(sub, "numerical", e.what());
    return 1;
  }
}
