#include "lagranflow/control.hpp"

#include <limits>

namespace lagranflow {

namespace {

const double kSqrt2Pi = std::sqrt(2.0) * kPi;

// Expansion of alpha_j(t) sampled at t_q = q / Q onto psi_1..psi_L.
Eigen::MatrixXd project_rows(const Eigen::MatrixXd& samples, int L) {
  const int q = static_cast<int>(samples.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(samples.rows(), L);
  for (int k = 0; k < q; ++k)
    out.noalias() += samples.col(k) * time_basis_values(L, double(k) / q).transpose();
  return out / q;
}

}  // namespace

std::vector<Mode> low_mode_support() {
  std::vector<Mode> out;
  for (const Mode& j : ModeSet::get(2)->modes())
    if (j.l1() <= 2) out.push_back(j);
  return out;
}

Eigen::VectorXd ansatz_coeffs(const Vec2& phi, const Vec2& c) {
  const ModeSet& ms = *ModeSet::get(3);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(ms.size());
  u[ms.index({0, 1})] = -kSqrt2Pi * phi[0] * std::cos(c[1]);
  u[ms.index({0, -1})] = -kSqrt2Pi * phi[0] * std::sin(c[1]);
  u[ms.index({1, 0})] = kSqrt2Pi * phi[1] * std::cos(c[0]);
  u[ms.index({-1, 0})] = kSqrt2Pi * phi[1] * std::sin(c[0]);
  return u;
}

Eigen::VectorXd ansatz_coeffs_dot(const Vec2& phi, const Vec2& dphi, const Vec2& c, const Vec2& dc) {
  const ModeSet& ms = *ModeSet::get(3);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(ms.size());
  const double c1 = std::cos(c[0]), s1 = std::sin(c[0]), c2 = std::cos(c[1]), s2 = std::sin(c[1]);
  u[ms.index({0, 1})] = -kSqrt2Pi * (dphi[0] * c2 - phi[0] * s2 * dc[1]);
  u[ms.index({0, -1})] = -kSqrt2Pi * (dphi[0] * s2 + phi[0] * c2 * dc[1]);
  u[ms.index({1, 0})] = kSqrt2Pi * (dphi[1] * c1 - phi[1] * s1 * dc[0]);
  u[ms.index({-1, 0})] = kSqrt2Pi * (dphi[1] * s1 + phi[1] * c1 * dc[0]);
  return u;
}

namespace {

// Pi g on the cutoff-3 mode set.
Eigen::VectorXd ansatz_forcing_full(const TransportAnsatz& a, double nu, double t) {
  const auto ms = ModeSet::get(3);
  const auto jt = a.jet(t);
  const Eigen::VectorXd u = ansatz_coeffs(jt.phi, jt.c);
  Eigen::VectorXd g = ansatz_coeffs_dot(jt.phi, jt.dphi, jt.c, jt.dc);
  Eigen::VectorXd b;
  TriadTable::get(3)->apply(u, &b);
  for (int i = 0; i < ms->size(); ++i) g[i] += nu * (*ms)[i].norm2() * u[i] + b[i];
  return g;
}

}  // namespace

Eigen::VectorXd ansatz_forcing(const TransportAnsatz& a, double nu, double t) {
  const auto ms = ModeSet::get(3);
  const Eigen::VectorXd g = ansatz_forcing_full(a, nu, t);
  const auto sup = low_mode_support();
  Eigen::VectorXd out(sup.size());
  for (size_t i = 0; i < sup.size(); ++i) out[i] = g[ms->index(sup[i])];
  return out;
}

ParticleSteering transport_control(const Vec2& p, const Vec2& p_hat, double nu, double t0, double t1,
                                   const SynthesisOptions& opts) {
  ParticleSteering out;
  out.step = SmoothStep(t0, t1);
  out.displacement = torus_delta(p, p_hat, &out.tie);
  const Vec2 d = out.displacement;
  const SmoothStep step = out.step;
  TransportAnsatz a;
  a.jet = [p, d, step](double t) {
    const auto s = step.jet(t);
    return TransportAnsatz::Jet{s[1] * d, s[2] * d, p + s[0] * d, s[1] * d};
  };
  const auto sup = low_mode_support();
  const int q = opts.quadrature;
  Eigen::MatrixXd samples(sup.size(), q);
  for (int k = 0; k < q; ++k) samples.col(k) = ansatz_forcing(a, nu, double(k) / q);
  out.control = ControlSignal(sup, project_rows(samples, opts.time_modes));
  return out;
}

ParticleSteering steer_particle_control(const Vec2& p, const Vec2& p_hat, double nu,
                                        const SynthesisOptions& opts) {
  return transport_control(p, p_hat, nu, 1.0 / 3.0, 2.0 / 3.0, opts);
}

double off_support_leakage(const ControlSignal& s) {
  double m = 0.0;
  for (size_t i = 0; i < s.support().size(); ++i)
    if (s.support()[i].l1() > 2) m = std::max(m, s.data().row(i).cwiseAbs().maxCoeff());
  return m;
}

DecayFit coefficient_decay(const ControlSignal& s) {
  DecayFit fit;
  const ControlSignal sp = s.kind() == ControlSignal::Kind::kSpectral ? s : s.to_spectral(256);
  const int L = sp.time_modes();
  if (L < 4 || sp.support().empty()) return fit;
  Eigen::VectorXd env(L);
  for (int l = 0; l < L; ++l) env[l] = sp.data().col(l).cwiseAbs().maxCoeff();
  for (int l = L - 2; l >= 0; --l) env[l] = std::max(env[l], env[l + 1]);
  const double top = env[0];
  if (top == 0.0) {
    fit.exponent = std::numeric_limits<double>::infinity();
    return fit;
  }
  fit.l_min = std::min(8, L / 2);
  fit.l_max = fit.l_min;
  for (int l = fit.l_min; l <= L; ++l)
    if (env[l - 1] > 1e-11 * top) fit.l_max = l;
  if (fit.l_max <= fit.l_min + 1) {
    fit.exponent = std::numeric_limits<double>::infinity();
    return fit;
  }
  double n = 0, mx = 0, my = 0, sxx = 0, sxy = 0;
  for (int l = fit.l_min; l <= fit.l_max; ++l) {
    mx += std::log(double(l));
    my += std::log(env[l - 1]);
    n += 1;
  }
  mx /= n;
  my /= n;
  for (int l = fit.l_min; l <= fit.l_max; ++l) {
    const double x = std::log(double(l)) - mx;
    sxx += x * x;
    sxy += x * (std::log(env[l - 1]) - my);
  }
  fit.exponent = -sxy / sxx;
  return fit;
}

LinearSteering steer_linearized(const SystemState& s, const ControlSignal& forcing, const FourierField& v_hat,
                                const Vec2& q_hat, double delta, const FlowParams& fp) {
  if (!(delta > 0.0 && delta <= 0.25)) throw std::invalid_argument("delta must be in (0, 1/4]");
  const auto ms = s.u.mode_set();
  const ModeSet& modes = *ms;
  const int M = modes.size();
  const auto table = TriadTable::get(modes.cutoff());
  const int n = fp.substeps;
  const double h = 1.0 / n;
  const FourierField vh = v_hat.with_cutoff(modes.cutoff());

  DenseRecord rec;
  const SystemState end = step_map(s, forcing, fp, &rec);

  // Base field, particle, and their time derivatives at the half-step nodes.
  const int nodes = 2 * n + 1;
  std::vector<double> times(nodes);
  for (int i = 0; i < nodes; ++i) times[i] = i * 0.5 * h;
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(M, nodes);
  if (!forcing.empty()) {
    const Eigen::MatrixXd fs = forcing.sample(times);
    for (size_t r = 0; r < forcing.support().size(); ++r) {
      const int idx = modes.index(forcing.support()[r]);
      if (idx >= 0) F.row(idx) += fs.row(r);
    }
  }
  auto rhs = [&](const Eigen::VectorXd& u, int node) {
    Eigen::VectorXd b;
    table->apply(u, &b);
    Eigen::VectorXd r = F.col(node) - b;
    for (int i = 0; i < M; ++i) r[i] -= fp.nu * modes[i].norm2() * u[i];
    return r;
  };
  std::vector<Eigen::VectorXd> U(nodes), Ut(nodes);
  std::vector<Vec2> Y(nodes), Yt(nodes);
  for (int k = 0; k <= n; ++k) {
    const Eigen::VectorXd& u = k < n ? rec.stage_u[0][k] : end.u.coeffs();
    const Vec2 y = k < n ? rec.stage_y[0][k] : (rec.stage_y[0][n - 1] + torus_delta(rec.stage_y[0][n - 1], end.y));
    U[2 * k] = u;
    Y[2 * k] = y;
    Ut[2 * k] = rhs(u, 2 * k);
    Yt[2 * k] = eval_field(FourierField(ms, u), y);
  }
  for (int k = 0; k < n; ++k) {
    const int a = 2 * k, b = 2 * k + 2, m = 2 * k + 1;
    U[m] = 0.5 * (U[a] + U[b]) + (h / 8.0) * (Ut[a] - Ut[b]);
    Y[m] = 0.5 * (Y[a] + Y[b]) + (h / 8.0) * (Yt[a] - Yt[b]);
    Ut[m] = rhs(U[m], m);
    Yt[m] = eval_field(FourierField(ms, U[m]), Y[m]);
  }

  Vec2 v_end;
  Mat2 g_end;
  eval_field_jet(modes, U[nodes - 1], Y[nodes - 1], nullptr, &g_end);
  v_end = eval_field(vh, Y[nodes - 1]);
  const Vec2 w = v_end + g_end * q_hat;
  const SmoothStep alpha(1.0 / 3.0, 2.0 / 3.0);
  const SmoothStep cut(1.0 - delta, 1.0);

  const auto ms3 = ModeSet::get(3);
  Eigen::MatrixXd zeta(M, nodes);
  Eigen::MatrixXd Jb;
  for (int i = 0; i < nodes; ++i) {
    const double t = times[i];
    const auto a = alpha.jet(t);
    // beta(t) = (t - 1) alpha(t): zero before 1/3, beta(1) = 0, beta'(1) = 1.
    const double be = (t - 1.0) * a[0], be1 = a[0] + (t - 1.0) * a[1], be2 = 2.0 * a[1] + (t - 1.0) * a[2];
    const Vec2 gam = a[0] * q_hat + be * w;
    const Vec2 gam1 = a[1] * q_hat + be1 * w;
    const Vec2 gam2 = a[2] * q_hat + be2 * w;
    Mat2 G;
    eval_field_jet(modes, U[i], Y[i], nullptr, &G);
    Mat2 Gt;
    eval_field_jet(modes, Ut[i], Y[i], nullptr, &Gt);
    std::array<Mat2, 2> H;
    eval_field_hessian(modes, U[i], Y[i], &H);
    Mat2 dG;
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) dG(b, c) = Gt(b, c) + H[b](c, 0) * Yt[i][0] + H[b](c, 1) * Yt[i][1];
    const Vec2 phi = gam1 - G * gam;
    const Vec2 dphi = gam2 - dG * gam - G * gam1;
    const auto c = cut.jet(t);
    const double th = 1.0 - c[0], dth = -c[1];
    const Eigen::VectorXd A3 = ansatz_coeffs(phi, Y[i]);
    const Eigen::VectorXd dA3 = ansatz_coeffs_dot(phi, dphi, Y[i], Yt[i]);
    Eigen::VectorXd v = (1.0 - th) * vh.coeffs();
    Eigen::VectorXd dv = -dth * vh.coeffs();
    for (int r = 0; r < ms3->size(); ++r) {
      if (A3[r] == 0.0 && dA3[r] == 0.0) continue;
      const int idx = modes.index((*ms3)[r]);
      v[idx] += th * A3[r];
      dv[idx] += dth * A3[r] + th * dA3[r];
    }
    table->jacobian(U[i], &Jb);
    Eigen::VectorXd z = dv + Jb * v;
    for (int r = 0; r < M; ++r) z[r] += fp.nu * modes[r].norm2() * v[r];
    zeta.col(i) = z;
  }

  // Terminal correction: chi(t) e_j with chi = d/dt of the cutoff step.
  std::vector<ControlSignal> cols;
  cols.reserve(M + 1);
  cols.push_back(ControlSignal::nodal(modes.modes(), zeta));
  Eigen::RowVectorXd chi(nodes);
  for (int i = 0; i < nodes; ++i) chi[i] = cut.jet(times[i])[1];
  for (int r = 0; r < M; ++r) {
    Eigen::MatrixXd vals = Eigen::MatrixXd::Zero(1, nodes);
    vals.row(0) = chi;
    cols.push_back(ControlSignal::nodal({modes[r]}, vals));
  }
  const Eigen::MatrixXd A = jacobian_matrix(rec, fp, cols);
  const Eigen::MatrixXd K = A.block(0, 1, M, M);
  const Eigen::VectorXd resid = vh.coeffs() - A.col(0).head(M);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd cc = lu.solve(resid);
  cc += lu.solve(resid - K * cc);

  for (int r = 0; r < M; ++r) zeta.row(r) += cc[r] * chi;
  LinearSteering out;
  out.zeta = ControlSignal::nodal(modes.modes(), zeta);
  const Eigen::MatrixXd fin = jacobian_matrix(rec, fp, {out.zeta});
  out.v1 = fin.col(0).head(M);
  out.z1 = fin.col(0).tail(2);
  out.v_error = (out.v1 - vh.coeffs()).cwiseAbs().maxCoeff();
  out.z_error = (out.z1 - q_hat).norm();
  return out;
}

namespace {

std::vector<ControlSignal> damping_basis(const DampingOptions& o) {
  const double ta = o.margin, tb = 0.5 - o.margin;
  const int q = 16 * o.time_modes;
  std::vector<ControlSignal> basis;
  for (const Mode& j : low_mode_support())
    for (int m = 0; m < o.window_modes; ++m) {
      Eigen::MatrixXd samples(1, q);
      for (int k = 0; k < q; ++k) {
        const double t = double(k) / q;
        const double x = (t - ta) / (tb - ta);
        samples(0, k) = std::exp(4.0) * bump_jet(x)[0] * std::cos(kPi * m * x);
      }
      basis.emplace_back(std::vector<Mode>{j}, project_rows(samples, o.time_modes));
    }
  return basis;
}

ControlSignal combine(const std::vector<ControlSignal>& basis, const Eigen::VectorXd& c, int L) {
  const auto sup = low_mode_support();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(sup.size(), L);
  for (size_t k = 0; k < basis.size(); ++k) {
    const int r = static_cast<int>(k) / (static_cast<int>(basis.size()) / static_cast<int>(sup.size()));
    d.row(r) += c[k] * basis[k].data().row(0);
  }
  return ControlSignal(sup, d);
}

}  // namespace

DampingResult damp_velocity_control(const SystemState& s, double kappa_target, int sobolev_s, int budget,
                                    const FlowParams& fp, const DampingOptions& opts) {
  if (!(kappa_target > 0.0)) throw std::invalid_argument("kappa_target must be > 0");
  const ModeSet& modes = s.u.modes();
  const int M = modes.size();
  const auto basis = damping_basis(opts);
  const int P = static_cast<int>(basis.size());
  Eigen::VectorXd W(M);
  for (int i = 0; i < M; ++i) W[i] = std::pow(modes[i].norm(), sobolev_s);

  DampingResult out;
  Eigen::VectorXd c = Eigen::VectorXd::Zero(P);
  auto evaluate = [&](const Eigen::VectorXd& coef, DenseRecord* rec) {
    const ControlSignal ctl = combine(basis, coef, opts.time_modes);
    const SystemState e = integrate(s, ctl, fp, 0.0, 0.5, opts.substeps, rec);
    return Eigen::VectorXd(W.cwiseProduct(e.u.coeffs()));
  };
  DenseRecord rec;
  Eigen::VectorXd r = evaluate(c, &rec);
  out.achieved = r.norm();
  out.control = combine(basis, c, opts.time_modes);
  if (out.achieved <= kappa_target) {
    out.converged = true;
    return out;
  }
  double mu = -1.0;
  while (out.iterations < budget) {
    const Eigen::MatrixXd A = jacobian_matrix(rec, fp, basis);
    const Eigen::MatrixXd J = W.asDiagonal() * A.topRows(M);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    if (mu < 0) mu = opts.ridge * std::max(JtJ.diagonal().maxCoeff(), 1e-300);
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    while (!accepted && out.iterations < budget) {
      ++out.iterations;
      Eigen::MatrixXd Hm = JtJ;
      Hm.diagonal().array() += mu;
      const Eigen::VectorXd step = -Hm.ldlt().solve(g);
      const Eigen::VectorXd trial = c + step;
      DenseRecord trec;
      Eigen::VectorXd rt;
      bool ok = true;
      try {
        rt = evaluate(trial, &trec);
      } catch (const IntegrationDiverged&) {
        ok = false;
      }
      if (ok && rt.norm() < r.norm()) {
        c = trial;
        r = rt;
        rec = std::move(trec);
        mu = std::max(mu / 3.0, 1e-14);
        accepted = true;
      } else {
        mu *= 4.0;
        if (mu > 1e20) break;
      }
    }
    if (!accepted) break;
    out.achieved = r.norm();
    if (out.achieved <= kappa_target) {
      out.converged = true;
      break;
    }
  }
  out.achieved = r.norm();
  out.control = combine(basis, c, opts.time_modes);
  return out;
}

ExactSteering exact_steer_fixpoint(const SystemState& s, const Vec2& p_hat, const NoiseSpec& spec,
                                   const FlowParams& fp, const FixpointOptions& opts) {
  if (s.u.cutoff() < 2) throw std::invalid_argument("field cutoff must be >= 2");
  ExactSteering out;
  const int L = spec.time_modes;
  SynthesisOptions syn;
  syn.time_modes = L;
  syn.quadrature = std::max(1024, 16 * L);
  const auto sup = low_mode_support();

  double kappa = opts.kappa;
  std::string last_failure;
  for (int attempt = 0; attempt < 4; ++attempt, kappa *= 0.5) {
    DampingOptions dopt = opts.damping_opts;
    dopt.time_modes = L;
    dopt.substeps = std::max(16, fp.substeps / 2);
    const DampingResult damp =
        damp_velocity_control(s, kappa, spec.sobolev_s, opts.damp_budget, fp, dopt);
    const SystemState mid = integrate(s, damp.control, fp, 0.0, 0.5, dopt.substeps);
    const Vec2 p1 = mid.y;

    auto control_for = [&](const Vec2& p) {
      return damp.control + transport_control(p1, p, fp.nu, opts.transport_t0, opts.transport_t1, syn).control;
    };
    auto endpoint = [&](const ControlSignal& c) { return step_map(s, c, fp).y; };

    Vec2 p = p_hat;
    double resid = std::numeric_limits<double>::infinity();
    int increases = 0;
    int it = 0;
    bool diverged = false;
    ControlSignal ctl;
    Vec2 y1;
    for (; it < opts.max_iterations; ++it) {
      ctl = control_for(p);
      y1 = endpoint(ctl);
      const Vec2 e = torus_delta(p_hat, y1);
      const double r = e.norm();
      increases = r > resid ? increases + 1 : 0;
      resid = r;
      if (resid <= opts.tolerance) break;
      if (increases >= 5) {
        diverged = true;
        break;
      }
      p = wrap_point(p - opts.damping * e);
    }
    if (diverged || resid > opts.tolerance) {
      last_failure = diverged ? "picard residual increased 5 consecutive iterations"
                              : "picard iteration budget exhausted";
      continue;
    }
    out.control = ctl;
    out.fixed_point = p;
    SteeringReport& rep = out.report;
    rep.iterations = it + 1;
    rep.converged = true;
    rep.kappa_used = kappa;
    rep.endpoint_error = resid;
    rep.endpoint_field_norm = sobolev_norm(step_map(s, ctl, fp).u, spec.sobolev_s);
    rep.max_off_support = off_support_leakage(ctl);
    rep.decay = coefficient_decay(ctl);
    rep.margins = support_margins(spec, ctl);
    SynthesisOptions wide;
    const ControlSignal full = transport_control(p1, p, fp.nu, opts.transport_t0, opts.transport_t1, wide).control;
    rep.ansatz_remainder = full.to_spectral(wide.time_modes).data().rightCols(wide.time_modes - L).norm();
    rep.status = rep.margins->membership ? "ok" : "margins-negative";
    return out;
  }
  throw SteeringDiverged("exact steering did not converge: " + last_failure);
}

}  // namespace lagranflow
