#include "lagranflow/noise.hpp"

#include <limits>
#include <stdexcept>

namespace lagranflow {

void NoiseSpec::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("noise." + key + ": " + why);
  };
  if (spatial_cutoff < 1 || spatial_cutoff > 32) fail("spatial_cutoff", "must be in [1, 32]");
  if (time_modes < 1 || time_modes > 4096) fail("time_modes", "must be in [1, 4096]");
  if (!(kappa > 0.0)) fail("kappa", "must be > 0");
  if (!(beta > 0.5)) fail("beta", "must be > 1/2");
  if (!(c0 > 0.0)) fail("c0", "must be > 0");
  if (!(delta > 0.0 && delta <= 1.0)) fail("delta", "must be in (0, 1]");
  if (!(amplification >= 1.0)) fail("amplification", "must be >= 1");
  if (sobolev_s < 0 || sobolev_s > 16) fail("sobolev_s", "must be in [0, 16]");
  if (density != "bump") fail("density", "only 'bump' is supported");
}

double bump_density(double r) {
  if (!(std::abs(r) < 1.0)) return 0.0;
  return std::exp(-1.0 / (1.0 - r * r));
}

double bump_log_density(double r) {
  if (!(std::abs(r) < 1.0)) return -std::numeric_limits<double>::infinity();
  return -1.0 / (1.0 - r * r);
}

double sample_bump(CounterRng& rng) {
  // Rejection from the uniform law; the envelope is the peak value e^{-1}.
  for (;;) {
    const double r = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform();
    if (std::abs(r) < 1.0 && v < std::exp(1.0 + bump_log_density(r))) return r;
  }
}

KickRealization sample_kick(const NoiseSpec& spec, CounterRng& rng) {
  auto modes = ModeSet::get(spec.spatial_cutoff);
  KickRealization k;
  k.spatial_cutoff = spec.spatial_cutoff;
  k.xi.resize(modes->size(), spec.time_modes);
  for (int i = 0; i < modes->size(); ++i)
    for (int l = 0; l < spec.time_modes; ++l) k.xi(i, l) = sample_bump(rng);
  return k;
}

ControlSignal KickRealization::to_signal(const NoiseSpec& spec) const {
  auto modes = ModeSet::get(spatial_cutoff);
  Eigen::MatrixXd c(xi.rows(), xi.cols());
  for (int i = 0; i < modes->size(); ++i)
    for (int l = 0; l < xi.cols(); ++l) c(i, l) = spec.scale((*modes)[i], l + 1) * xi(i, l);
  return ControlSignal(modes->modes(), c);
}

KickRealization kick_from_signal(const NoiseSpec& spec, const ControlSignal& signal) {
  auto modes = ModeSet::get(spec.spatial_cutoff);
  const ControlSignal sp = signal.to_spectral(spec.time_modes);
  KickRealization k;
  k.spatial_cutoff = spec.spatial_cutoff;
  k.xi = Eigen::MatrixXd::Zero(modes->size(), spec.time_modes);
  for (size_t r = 0; r < sp.support().size(); ++r) {
    const Mode& j = sp.support()[r];
    const int i = modes->index(j);
    if (i < 0) continue;
    for (int l = 1; l <= spec.time_modes; ++l) k.xi(i, l - 1) = sp.data()(r, l - 1) / spec.scale(j, l);
  }
  return k;
}

double kick_inner_product(const NoiseSpec& spec, const ControlSignal& signal, int l, const Mode& j) {
  return signal.coeff(j, l) / spec.d(j);
}

SupportMargins support_margins(const NoiseSpec& spec, const ControlSignal& signal) {
  auto modes = ModeSet::get(spec.spatial_cutoff);
  const int L = spec.time_modes;
  SupportMargins out;
  out.margins.resize(modes->size(), L);
  for (int i = 0; i < modes->size(); ++i) {
    const Mode& j = (*modes)[i];
    for (int l = 1; l <= L; ++l)
      out.margins(i, l - 1) = spec.positivity_radius(j, l) - std::abs(kick_inner_product(spec, signal, l, j));
  }
  out.min_margin = out.margins.size() ? out.margins.minCoeff() : 0.0;

  ControlSignal sp = signal.kind() == ControlSignal::Kind::kSpectral ? signal : signal.to_spectral(4 * L);
  double rem2 = 0.0;
  for (size_t r = 0; r < sp.support().size(); ++r) {
    const Mode& j = sp.support()[r];
    const bool inside = modes->index(j) >= 0;
    for (int l = 1; l <= sp.time_modes(); ++l)
      if (!inside || l > L) {
        const double v = sp.data()(r, l - 1) / spec.d(j);
        rem2 += v * v;
      }
  }
  out.remainder_norm = std::sqrt(rem2);
  out.membership = out.min_margin > 0.0 && out.remainder_norm == 0.0;

  double req = 1.0;
  for (int i = 0; i < modes->size() && std::isfinite(req); ++i) {
    const Mode& j = (*modes)[i];
    for (int l = 1; l <= L; ++l) {
      const double alpha = std::abs(signal.coeff(j, l));
      if (j.l1() <= 2) {
        req = std::max(req, alpha / (spec.b(j) * spec.c(l) * spec.delta));
      } else if (out.margins(i, l - 1) <= 0.0) {
        req = std::numeric_limits<double>::infinity();
        break;
      }
    }
  }
  if (out.remainder_norm > 0.0) req = std::numeric_limits<double>::infinity();
  out.required_amplification = req;
  return out;
}

namespace {

// Gauss-Legendre nodes/weights on [0,1] via Golub-Welsch.
void gauss_legendre(int n, std::vector<double>* x, std::vector<double>* w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x->resize(n);
  w->resize(n);
  for (int k = 0; k < n; ++k) {
    (*x)[k] = 0.5 * (es.eigenvalues()[k] + 1.0);
    const double v = es.eigenvectors()(0, k);
    (*w)[k] = v * v;
  }
}

struct TimeCoefficients {
  Eigen::VectorXd c;
  double norm2 = 0.0;
};

TimeCoefficients time_coefficients(const std::function<double(double)>& g, int L) {
  constexpr int kPanels = 512;
  constexpr int kOrder = 16;
  std::vector<double> gx, gw;
  gauss_legendre(kOrder, &gx, &gw);
  TimeCoefficients out;
  out.c = Eigen::VectorXd::Zero(L);
  for (int p = 0; p < kPanels; ++p)
    for (int k = 0; k < kOrder; ++k) {
      const double t = (p + gx[k]) / kPanels;
      const double w = gw[k] / kPanels;
      const double v = g(t);
      out.norm2 += w * v * v;
      out.c += (w * v) * time_basis_values(L, t);
    }
  return out;
}

double tail_from(const TimeCoefficients& tc, int N) {
  const int L = static_cast<int>(tc.c.size());
  double direct = 0.0;
  for (int l = std::max(N, 1); l <= L; ++l) direct += tc.c[l - 1] * tc.c[l - 1];
  const double beyond = std::max(0.0, tc.norm2 - tc.c.squaredNorm());
  const double floor = 1e-14 * tc.norm2;
  return std::sqrt(direct + (beyond > floor ? beyond : 0.0));
}

}  // namespace

double poincare_tail(const std::function<double(double)>& g, int N) {
  return tail_from(time_coefficients(g, std::max(2048, 2 * N)), N);
}

PoincareDecay poincare_decay(const std::function<double(double)>& g, int r) {
  (void)r;
  PoincareDecay out;
  const TimeCoefficients tc = time_coefficients(g, 2048);
  out.norm = std::sqrt(tc.norm2);
  const double scale = std::max(out.norm, 1e-300);
  const double h = 1e-4;
  const double jump = std::abs(g(0.0) - g(1.0));
  const double d0 = (-3.0 * g(0.0) + 4.0 * g(h) - g(2.0 * h)) / (2.0 * h);
  const double d1 = (3.0 * g(1.0) - 4.0 * g(1.0 - h) + g(1.0 - 2.0 * h)) / (2.0 * h);
  out.periodic_warning = jump > 1e-8 * scale || std::abs(d0 - d1) > 1e-5 * (scale + std::abs(d0));
  std::vector<double> lx, ly;
  for (int N = 4; N <= 256; N *= 2) {
    const double t = tail_from(tc, N);
    out.cutoffs.push_back(N);
    out.tail_norms.push_back(t);
    if (t > 1e-12 * scale) {
      lx.push_back(std::log(double(N)));
      ly.push_back(std::log(t));
    }
  }
  if (lx.size() < 2) {
    out.super_fast = true;
    out.slope = -std::numeric_limits<double>::infinity();
    return out;
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k] / n;
    my += ly[k] / n;
  }
  double sxy = 0, sxx = 0;
  for (size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  out.slope = sxy / sxx;
  return out;
}

}  // namespace lagranflow
