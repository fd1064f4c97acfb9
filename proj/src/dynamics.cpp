#include "lagranflow/dynamics.hpp"

#include <sstream>

namespace lagranflow {

Vec2 wrap_point(const Vec2& y) {
  Vec2 out;
  for (int a = 0; a < 2; ++a) {
    double r = std::fmod(y[a], kTwoPi);
    if (r < 0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    out[a] = r;
  }
  return out;
}

Vec2 torus_delta(const Vec2& a, const Vec2& b, bool* tie) {
  Vec2 d;
  bool t = false;
  for (int k = 0; k < 2; ++k) {
    double r = std::fmod(b[k] - a[k], kTwoPi);
    if (r < -kPi) r += kTwoPi;
    if (r > kPi) r -= kTwoPi;
    if (r == -kPi) r = kPi;
    if (std::abs(r) == kPi) t = true;
    d[k] = r;
  }
  if (tie) *tie = t;
  return d;
}

double torus_distance(const Vec2& a, const Vec2& b) { return torus_delta(a, b).norm(); }

double energy(const FourierField& u) { return 0.5 * u.coeffs().squaredNorm(); }

double enstrophy(const FourierField& u) {
  double acc = 0.0;
  for (int i = 0; i < u.size(); ++i) acc += u.modes()[i].norm2() * u.coeffs()[i] * u.coeffs()[i];
  return 0.5 * acc;
}

namespace {

std::vector<double> half_step_times(double t0, double t1, int n) {
  std::vector<double> t(2 * n + 1);
  for (int i = 0; i <= 2 * n; ++i) t[i] = t0 + (t1 - t0) * i / (2.0 * n);
  return t;
}

// Row indices of the support modes inside the field's mode set.
std::vector<int> support_rows(const ControlSignal& f, const ModeSet& modes) {
  std::vector<int> rows(f.support().size());
  for (size_t i = 0; i < rows.size(); ++i) {
    rows[i] = modes.index(f.support()[i]);
    if (rows[i] < 0) {
      const double mag = f.data().row(i).cwiseAbs().maxCoeff();
      if (mag != 0.0)
        throw std::invalid_argument("forcing mode (" + std::to_string(f.support()[i].j1) + "," +
                                    std::to_string(f.support()[i].j2) + ") outside the field cutoff");
    }
  }
  return rows;
}

Eigen::MatrixXd forcing_grid(const ControlSignal& f, const ModeSet& modes, const std::vector<double>& times) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(modes.size(), times.size());
  if (f.empty()) return out;
  const std::vector<int> rows = support_rows(f, modes);
  const Eigen::MatrixXd s = f.sample(times);
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i] >= 0) out.row(rows[i]) += s.row(i);
  return out;
}

void check_finite(const Eigen::VectorXd& u, const Vec2& y, double t0, double t1, int step) {
  if (u.allFinite() && y.allFinite() && u.cwiseAbs().maxCoeff() < 1e150) return;
  std::ostringstream os;
  os << "integration diverged on interval [" << t0 << ", " << t1 << "] at substep " << step;
  throw IntegrationDiverged(os.str());
}

Vec2 particle_velocity(const ModeSet& modes, const Eigen::VectorXd& u, const Vec2& y) {
  Vec2 v;
  eval_field_jet(modes, u, y, &v, nullptr);
  return v;
}

}  // namespace

SystemState integrate(const SystemState& s, const ControlSignal& forcing, const FlowParams& fp,
                      double t0, double t1, int n, DenseRecord* record) {
  if (n < 1) throw std::invalid_argument("substeps must be >= 1");
  const ModeSet& modes = s.u.modes();
  const auto table = TriadTable::get(modes.cutoff());
  const int M = modes.size();
  const double h = (t1 - t0) / n;
  Eigen::ArrayXd E(M), E2(M);
  for (int i = 0; i < M; ++i) {
    E[i] = std::exp(-fp.nu * modes[i].norm2() * h * 0.5);
    E2[i] = E[i] * E[i];
  }
  const Eigen::MatrixXd F = forcing_grid(forcing, modes, half_step_times(t0, t1, n));
  if (record) {
    record->cutoff = modes.cutoff();
    record->t0 = t0;
    record->t1 = t1;
    record->substeps = n;
    for (int k = 0; k < 4; ++k) {
      record->stage_u[k].resize(n);
      record->stage_y[k].resize(n);
    }
  }
  Eigen::VectorXd u = s.u.coeffs();
  Vec2 y = s.y;
  Eigen::VectorXd b(M), k1(M), k2(M), k3(M), k4(M), ua(M), ub(M), uc(M);
  for (int step = 0; step < n; ++step) {
    const int c0 = 2 * step;
    table->apply(u, &b);
    k1 = F.col(c0) - b;
    ua = (E * (u + 0.5 * h * k1).array()).matrix();
    table->apply(ua, &b);
    k2 = F.col(c0 + 1) - b;
    ub = (E * u.array()).matrix() + 0.5 * h * k2;
    table->apply(ub, &b);
    k3 = F.col(c0 + 1) - b;
    uc = (E2 * u.array()).matrix() + h * (E * k3.array()).matrix();
    table->apply(uc, &b);
    k4 = F.col(c0 + 2) - b;

    const Vec2 l1 = particle_velocity(modes, u, y);
    const Vec2 ya = y + 0.5 * h * l1;
    const Vec2 l2 = particle_velocity(modes, ua, ya);
    const Vec2 yb = y + 0.5 * h * l2;
    const Vec2 l3 = particle_velocity(modes, ub, yb);
    const Vec2 yc = y + h * l3;
    const Vec2 l4 = particle_velocity(modes, uc, yc);

    if (record) {
      record->stage_u[0][step] = u;
      record->stage_u[1][step] = ua;
      record->stage_u[2][step] = ub;
      record->stage_u[3][step] = uc;
      record->stage_y[0][step] = y;
      record->stage_y[1][step] = ya;
      record->stage_y[2][step] = yb;
      record->stage_y[3][step] = yc;
    }

    u = (E2 * u.array()).matrix() +
        (h / 6.0) * ((E2 * k1.array()).matrix() + 2.0 * (E * (k2 + k3).array()).matrix() + k4);
    y = y + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
    check_finite(u, y, t0, t1, step);
  }
  return {FourierField(s.u.mode_set(), u), wrap_point(y)};
}

SystemState step_map(const SystemState& s, const ControlSignal& forcing, const FlowParams& fp,
                     DenseRecord* record) {
  if (fp.substeps < 16) throw std::invalid_argument("substeps must be >= 16");
  return integrate(s, forcing, fp, 0.0, 1.0, fp.substeps, record);
}

SystemState step_map(const SystemState& s, const KickRealization& kick, const NoiseSpec& spec,
                     const FlowParams& fp, DenseRecord* record) {
  return step_map(s, kick.to_signal(spec), fp, record);
}

Trajectory run_chain(const SystemState& s0, const NoiseSpec& spec, const FlowParams& fp,
                     std::uint64_t seed, int K, const ChainOptions& opts) {
  if (K < 0) throw std::invalid_argument("kick count must be >= 0");
  if (s0.u.cutoff() < spec.spatial_cutoff)
    throw std::invalid_argument("field cutoff smaller than noise cutoff");
  CounterRng rng = CounterRng::stream(seed, StreamTag::kKicks, opts.stream_index);
  Trajectory tr;
  tr.states.reserve(K + 1);
  tr.states.push_back({s0.u, wrap_point(s0.y)});
  for (int k = 0; k < K; ++k) {
    KickRealization kick = sample_kick(spec, rng);
    DenseRecord rec;
    tr.states.push_back(step_map(tr.states.back(), kick, spec, fp, opts.keep_records ? &rec : nullptr));
    if (opts.keep_kicks) tr.kicks.push_back(std::move(kick));
    if (opts.keep_records) tr.records.push_back(std::move(rec));
  }
  return tr;
}

TangentBatch linearized_batch(const DenseRecord& rec, const FlowParams& fp, const TangentBatch& init,
                              const std::vector<const ControlSignal*>& zetas) {
  const int n = rec.substeps;
  if (n < 1 || rec.stage_u[0].empty()) throw std::invalid_argument("dense record is empty");
  const int M = static_cast<int>(rec.stage_u[0][0].size());
  const ModeSet& modes = *ModeSet::get(rec.cutoff);
  const auto table = TriadTable::get(modes.cutoff());
  const int C = static_cast<int>(init.v.cols());
  if (init.v.rows() != M || init.z.rows() != 2 || init.z.cols() != C ||
      (!zetas.empty() && static_cast<int>(zetas.size()) != C))
    throw std::invalid_argument("tangent batch shape mismatch");

  const double h = (rec.t1 - rec.t0) / n;
  Eigen::VectorXd E(M), E2(M);
  for (int i = 0; i < M; ++i) {
    E[i] = std::exp(-fp.nu * modes[i].norm2() * h * 0.5);
    E2[i] = E[i] * E[i];
  }
  const auto times = half_step_times(rec.t0, rec.t1, n);
  struct Sampled {
    std::vector<int> rows;
    Eigen::MatrixXd values;
  };
  std::vector<Sampled> zs(C);
  bool any_zeta = false;
  for (int c = 0; c < static_cast<int>(zetas.size()); ++c)
    if (zetas[c] && !zetas[c]->empty()) {
      zs[c].rows = support_rows(*zetas[c], modes);
      zs[c].values = zetas[c]->sample(times);
      any_zeta = true;
    }
  auto zeta_at = [&](int ti, Eigen::MatrixXd* out) {
    out->setZero(M, C);
    if (!any_zeta) return;
    for (int c = 0; c < C; ++c)
      for (size_t i = 0; i < zs[c].rows.size(); ++i)
        if (zs[c].rows[i] >= 0) (*out)(zs[c].rows[i], c) += zs[c].values(i, ti);
  };

  Eigen::MatrixXd V = init.v, Z = init.z;
  Eigen::MatrixXd J, D1, D2, D3, D4, Va, Vb, Vc, Zt;
  auto stage_particle = [&](int s, int step, const Eigen::MatrixXd& Vs, const Eigen::MatrixXd& Zs) {
    const Vec2& ys = rec.stage_y[s][step];
    Vec2 val;
    Mat2 grad;
    eval_field_jet(modes, rec.stage_u[s][step], ys, &val, &grad);
    Eigen::MatrixXd out = evaluation_rows(modes, ys) * Vs;
    out.noalias() += grad * Zs;
    return out;
  };
  for (int step = 0; step < n; ++step) {
    const int c0 = 2 * step;
    table->jacobian(rec.stage_u[0][step], &J);
    zeta_at(c0, &Zt);
    D1 = Zt;
    D1.noalias() -= J * V;
    Va = E.asDiagonal() * (V + 0.5 * h * D1);
    table->jacobian(rec.stage_u[1][step], &J);
    zeta_at(c0 + 1, &Zt);
    D2 = Zt;
    D2.noalias() -= J * Va;
    Vb = E.asDiagonal() * V + 0.5 * h * D2;
    table->jacobian(rec.stage_u[2][step], &J);
    D3 = Zt;
    D3.noalias() -= J * Vb;
    Vc = E2.asDiagonal() * V + h * (E.asDiagonal() * D3);
    table->jacobian(rec.stage_u[3][step], &J);
    zeta_at(c0 + 2, &Zt);
    D4 = Zt;
    D4.noalias() -= J * Vc;

    const Eigen::MatrixXd L1 = stage_particle(0, step, V, Z);
    const Eigen::MatrixXd Za = Z + 0.5 * h * L1;
    const Eigen::MatrixXd L2 = stage_particle(1, step, Va, Za);
    const Eigen::MatrixXd Zb = Z + 0.5 * h * L2;
    const Eigen::MatrixXd L3 = stage_particle(2, step, Vb, Zb);
    const Eigen::MatrixXd Zc = Z + h * L3;
    const Eigen::MatrixXd L4 = stage_particle(3, step, Vc, Zc);

    V = E2.asDiagonal() * V + (h / 6.0) * (E2.asDiagonal() * D1 + 2.0 * (E.asDiagonal() * (D2 + D3)) + D4);
    Z = Z + (h / 6.0) * (L1 + 2.0 * L2 + 2.0 * L3 + L4);
    if (!V.allFinite() || !Z.allFinite()) {
      std::ostringstream os;
      os << "tangent integration diverged on interval [" << rec.t0 << ", " << rec.t1 << "] at substep " << step;
      throw IntegrationDiverged(os.str());
    }
  }
  return {V, Z};
}

TangentState linearized_map(const SystemState& s, const ControlSignal& forcing, const ControlSignal& zeta,
                            const FlowParams& fp) {
  DenseRecord rec;
  step_map(s, forcing, fp, &rec);
  const int M = s.u.size();
  TangentBatch init{Eigen::MatrixXd::Zero(M, 1), Eigen::MatrixXd::Zero(2, 1)};
  const TangentBatch out = linearized_batch(rec, fp, init, {&zeta});
  return {FourierField(s.u.mode_set(), out.v.col(0)), out.z.col(0)};
}

Eigen::MatrixXd jacobian_matrix(const DenseRecord& rec, const FlowParams& fp,
                                const std::vector<ControlSignal>& basis) {
  const int M = static_cast<int>(rec.stage_u[0][0].size());
  const int C = static_cast<int>(basis.size());
  Eigen::MatrixXd out(M + 2, C);
  if (C == 0) return out;
  std::vector<const ControlSignal*> zetas;
  for (const auto& b : basis) zetas.push_back(&b);
  TangentBatch init{Eigen::MatrixXd::Zero(M, C), Eigen::MatrixXd::Zero(2, C)};
  const TangentBatch t = linearized_batch(rec, fp, init, zetas);
  out.topRows(M) = t.v;
  out.bottomRows(2) = t.z;
  return out;
}

Eigen::MatrixXd jacobian_matrix(const SystemState& s, const ControlSignal& forcing,
                                const std::vector<ControlSignal>& basis, const FlowParams& fp) {
  DenseRecord rec;
  step_map(s, forcing, fp, &rec);
  return jacobian_matrix(rec, fp, basis);
}

Eigen::MatrixXd state_derivative(const DenseRecord& rec, const FlowParams& fp,
                                 const Eigen::MatrixXd& directions) {
  const int M = static_cast<int>(rec.stage_u[0][0].size());
  if (directions.rows() != M + 2) throw std::invalid_argument("direction rows must be M + 2");
  TangentBatch init{directions.topRows(M), directions.bottomRows(2)};
  const TangentBatch t = linearized_batch(rec, fp, init, {});
  Eigen::MatrixXd out(M + 2, directions.cols());
  out.topRows(M) = t.v;
  out.bottomRows(2) = t.z;
  return out;
}

}  // namespace lagranflow
