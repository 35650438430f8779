#include "kinetic/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "kinetic/dielectric.hpp"
#include "kinetic/errors.hpp"
#include "kinetic/forcefield.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"

namespace kinetic {
namespace {

int theta_order(int n_angular);
constexpr double kSpectrumFloor = 1e-12;  // plane cutoff relative to peak

double sq(double x) { return x * x; }

struct WNode {
  Vec3 w;
  double wg;   // g(w) d^3w
  Vec3 wgrad;  // grad g(w) d^3w
};

std::vector<WNode> velocity_nodes(const VelocityDistribution& g, int order) {
  std::vector<WNode> nodes;
  if (g.kind() == VelocityDistribution::Kind::maxwellian) {
    const Rule1D& gh = gauss_hermite(order);
    double T = g.temperature();
    double width = std::sqrt(2.0 * T);
    double c = g.density() / (M_PI * std::sqrt(M_PI));
    Vec3 u = g.mean();
    nodes.reserve(std::size_t(order) * order * order);
    for (int i = 0; i < order; ++i)
      for (int j = 0; j < order; ++j)
        for (int k = 0; k < order; ++k) {
          Vec3 w = u + width * Vec3(gh.x[i], gh.x[j], gh.x[k]);
          double wt = c * gh.w[i] * gh.w[j] * gh.w[k];
          nodes.push_back({w, wt, wt * (-(w - u) / T)});
        }
  } else {
    const VelocityGrid& grid = g.grid();
    double cell = grid.h * grid.h * grid.h;
    for (int i = 0; i < grid.n[0]; ++i)
      for (int j = 0; j < grid.n[1]; ++j)
        for (int k = 0; k < grid.n[2]; ++k) {
          Vec3 w = grid.node(i, j, k);
          double val = g.value(w);
          Vec3 gr = g.gradient(w);
          if (val == 0.0 && gr.isZero()) continue;
          nodes.push_back({w, val * cell, gr * cell});
        }
  }
  return nodes;
}

// ---------------------------------------------------------------------------
// Resonant-plane machinery (finite_range)

double plane_spectrum(const RadialPotential& p, double rho) {
  double f = p.fourier(rho);
  return rho * rho * rho * f * f;
}

struct PlaneSpectrum {
  double k_peak = 1;  // argmax of rho^3 PhiHat(rho)^2
  double k_bulk = 1;  // first drop to 1e-3 of the peak past it
  double k_max = 1;   // sustained drop below kSpectrumFloor
};

PlaneSpectrum scan_spectrum(const RadialPotential& p, const char* op) {
  // Geometric sweep 2^-8 .. 2^17, evaluated lazily: transform cost grows with
  // k, so the walk stops at the first sustained drop under floor. An isolated
  // transform zero must not stop the scan, so the cutoff requires four
  // consecutive points under floor past the running peak; a later, higher
  // peak restarts the count.
  std::vector<double> ks, hs;
  ks.reserve(201);
  hs.reserve(201);
  std::size_t ipk = 0;
  int run = 0;
  double k_max = 0;
  for (int j = -64; j <= 136 && k_max == 0; ++j) {
    double k = std::exp2(double(j) / 8.0);
    ks.push_back(k);
    hs.push_back(plane_spectrum(p, k));
    if (hs.back() > hs[ipk]) {
      ipk = ks.size() - 1;
      run = 0;
    } else if (hs[ipk] > 0 && hs.back() < kSpectrumFloor * hs[ipk]) {
      if (++run >= 4) k_max = k;
    } else {
      run = 0;
    }
  }
  double peak = hs[ipk];
  if (!(peak > 0)) throw NonIntegrableKernel(op, "force spectrum vanishes");
  if (k_max == 0)
    throw NonIntegrableKernel(
        op, "force spectrum has no square-integrable tail; smooth the core");
  PlaneSpectrum out;
  out.k_peak = ks[ipk];
  out.k_max = k_max;
  out.k_bulk = ks.back();
  for (std::size_t j = ipk; j < hs.size(); ++j)
    if (hs[j] < 1e-3 * peak) {
      out.k_bulk = ks[j];
      break;
    }
  return out;
}

Rule1D plane_radial_rule(const PlaneSpectrum& spec, int n_radial) {
  // One dense panel across the spectral peak, then geometric octaves to the
  // cutoff; a single wide panel would starve the peak of nodes.
  double split = std::min(4.0 * spec.k_peak, spec.k_max);
  Rule1D rule = gauss_legendre_on(n_radial, 0.0, split);
  int n_oct = std::max(8, n_radial / 4);
  for (double a = split; a < spec.k_max; a *= 2.0) {
    Rule1D seg = gauss_legendre_on(n_oct, a, std::min(2.0 * a, spec.k_max));
    rule.x.insert(rule.x.end(), seg.x.begin(), seg.x.end());
    rule.w.insert(rule.w.end(), seg.w.begin(), seg.w.end());
  }
  return rule;
}

struct PassSums {
  Mat3 Sg = Mat3::Zero();     // plane tensors against g
  Vec3 Sgrad = Vec3::Zero();  // plane tensors against grad g
};

PassSums radial_shell_pass(const Vec3& v, const VelocityDistribution& g,
                           double c_perp, double c_par, int n_radial,
                           int n_theta, int n_phi, int workers);

PassSums finite_range_pass(const Vec3& v, const RadialPotential& profile,
                           const VelocityDistribution& g,
                           const DielectricFunction* screen,
                           const PlaneSpectrum& spec, int n_radial,
                           int n_angular, int workers) {
  Rule1D radial = plane_radial_rule(spec, n_radial);
  std::vector<double> f(radial.size());
  double radial_moment = 0;
  for (std::size_t i = 0; i < radial.size(); ++i) {
    f[i] = plane_spectrum(profile, radial.x[i]);
    radial_moment += radial.w[i] * f[i];
  }
  int n_theta = theta_order(n_angular);
  if (!screen) {
    // Unscreened angular integral closes to pi (I - uu); the remaining
    // 1/|v - w| integral is the generic shell pass.
    return radial_shell_pass(v, g, M_PI * radial_moment, 0.0, n_radial,
                             n_theta, n_angular, workers);
  }
  // Screened plane tensor. k runs over the plane normal to u = v - w, so
  // k.w = k.v there: the tensor depends on the shell direction alone and is
  // shared by every radius along the ray.
  double r_hi = g.support_radius_about(v);
  Rule1D rr = gauss_legendre_on(n_radial, 0.0, r_hi);
  const Rule1D& tt = gauss_legendre(n_theta);
  double dphi_dir = 2.0 * M_PI / n_angular;
  double dphi_k = 2.0 * M_PI / n_angular;
  std::vector<PassSums> parts = parallel_map<PassSums>(
      std::size_t(n_theta) * n_angular,
      [&](std::size_t idx) -> PassSums {
        std::size_t it = idx / std::size_t(n_angular);
        int ip = int(idx % std::size_t(n_angular));
        double ct = tt.x[it];
        double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        double phi = dphi_dir * (double(ip) + 0.5);
        Vec3 nhat(st * std::cos(phi), st * std::sin(phi), ct);
        auto [e1, e2] = plane_basis(nhat);
        Mat3 plane = Mat3::Zero();
        for (std::size_t ir = 0; ir < radial.size(); ++ir) {
          if (f[ir] == 0) continue;
          Mat3 ang = Mat3::Zero();
          for (int ja = 0; ja < n_angular; ++ja) {
            double pk = dphi_k * (double(ja) + 0.5);
            Vec3 kh = std::cos(pk) * e1 + std::sin(pk) * e2;
            double s2 = std::norm(
                screen->delta_critical(kh, radial.x[ir], kh.dot(v)));
            ang += outer(kh, kh) * (dphi_k / s2);
          }
          plane += (radial.w[ir] * f[ir]) * ang;
        }
        PassSums out;
        for (std::size_t ir = 0; ir < rr.size(); ++ir) {
          double r = rr.x[ir];
          Vec3 w = v + r * nhat;
          // r^2 dr dOmega against the 1/|v - w| kernel leaves weight r.
          double wt = rr.w[ir] * r * tt.w[it] * dphi_dir;
          double val = g.value(w);
          if (val != 0) out.Sg += (wt * val) * plane;
          Vec3 gr = g.gradient(w);
          if (!gr.isZero()) out.Sgrad += wt * (plane * gr);
        }
        return out;
      },
      workers);
  PassSums total;
  for (const PassSums& p : parts) {
    total.Sg += p.Sg;
    total.Sgrad += p.Sgrad;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Spherical pass centered on v. The integrand carries a 1/|v - w| weight, so
// quadrature in w = v + r n neutralizes it with the volume Jacobian; the
// plain Hermite grid would lose four digits on the singularity.

PassSums radial_shell_pass(const Vec3& v, const VelocityDistribution& g,
                           double c_perp, double c_par, int n_radial,
                           int n_theta, int n_phi, int workers) {
  double r_max;
  if (g.kind() == VelocityDistribution::Kind::maxwellian) {
    r_max = (v - g.mean()).norm() + 13.0 * std::sqrt(g.temperature());
  } else {
    const VelocityGrid& grid = g.grid();
    Vec3 lo = grid.lo, hi = grid.hi();
    r_max = 0;
    for (int c = 0; c < 8; ++c) {
      Vec3 corner(c & 1 ? hi[0] : lo[0], c & 2 ? hi[1] : lo[1],
                  c & 4 ? hi[2] : lo[2]);
      r_max = std::max(r_max, (corner - v).norm());
    }
  }
  if (!(r_max > 0)) r_max = 1.0;
  Rule1D rr = gauss_legendre_on(n_radial, 0.0, r_max);
  const Rule1D& tt = gauss_legendre(n_theta);  // cos(theta) nodes
  double dphi = 2.0 * M_PI / n_phi;
  std::vector<PassSums> parts = parallel_map<PassSums>(
      rr.size(),
      [&](std::size_t ir) -> PassSums {
        PassSums out;
        double r = rr.x[ir];
        for (std::size_t it = 0; it < tt.size(); ++it) {
          double ct = tt.x[it];
          double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
          for (int ip = 0; ip < n_phi; ++ip) {
            double phi = dphi * (double(ip) + 0.5);
            Vec3 nhat(st * std::cos(phi), st * std::sin(phi), ct);
            Vec3 w = v + r * nhat;
            if (!g.contains(w)) continue;
            // r^2 dr dOmega against the 1/|v - w| kernel leaves weight r.
            double wt = rr.w[ir] * r * tt.w[it] * dphi;
            Mat3 P = c_perp * (Mat3::Identity() - outer(nhat, nhat)) +
                     c_par * outer(nhat, nhat);
            double val = g.value(w);
            if (val != 0) out.Sg += (wt * val) * P;
            Vec3 gr = g.gradient(w);
            if (!gr.isZero()) out.Sgrad += wt * (P * gr);
          }
        }
        return out;
      },
      workers);
  PassSums total;
  for (const PassSums& p : parts) {
    total.Sg += p.Sg;
    total.Sgrad += p.Sgrad;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Lag-kernel pass (coulomb/rayleigh). The lag integral of the straight-line
// force kernel only grows logarithmically past s_max; the plateau matrix
// s K(v; s) is the per-decade growth rate.

struct LagNodes {
  std::vector<double> s, wt;
};

LagNodes lag_nodes(double s_max, int n_lin, int n_log) {
  LagNodes out;
  double split = std::min(1.0, s_max);
  auto add_simpson = [&out](double a, double b, int n, bool log_sub) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    for (int j = 0; j <= n; ++j) {
      double t = a + h * double(j);
      double wt = h / 3.0 * (j == 0 || j == n ? 1.0 : (j % 2 ? 4.0 : 2.0));
      if (log_sub) {
        out.s.push_back(std::exp(t));
        out.wt.push_back(wt * std::exp(t));
      } else {
        out.s.push_back(t);
        out.wt.push_back(wt);
      }
    }
  };
  add_simpson(0.0, split, n_lin, false);
  if (s_max > split)
    add_simpson(std::log(split), std::log(s_max), n_log, true);
  return out;
}

struct LagPass {
  Mat3 Kg_int = Mat3::Zero();
  Vec3 Kgrad_int = Vec3::Zero();
  Mat3 K_at_plateau = Mat3::Zero();
};

LagPass coulomb_lag_pass(const Vec3& v, const RadialPotential& profile,
                         const VelocityDistribution& g, double s_max,
                         double plateau_lag, int n_hermite, int n_lin,
                         int n_log, int workers) {
  std::vector<WNode> nodes = velocity_nodes(g, n_hermite);
  double u_max = 0;
  for (const WNode& nd : nodes) u_max = std::max(u_max, (v - nd.w).norm());
  double s_top = std::max(s_max, plateau_lag);
  auto gc = GradientCorrelation::cached(
      profile, std::max(64.0, 1.05 * u_max * s_top));
  LagNodes lag = lag_nodes(s_max, n_lin, n_log);
  std::size_t n_lag = lag.s.size();
  struct Slice {
    Mat3 Kg = Mat3::Zero();
    Vec3 Kgrad = Vec3::Zero();
  };
  std::vector<Slice> slices = parallel_map<Slice>(
      n_lag + 1,
      [&](std::size_t i) -> Slice {
        double s = i < n_lag ? lag.s[i] : plateau_lag;
        Slice out;
        for (const WNode& nd : nodes) {
          Mat3 M = gc->eval((v - nd.w) * s);
          out.Kg += nd.wg * M;
          out.Kgrad += M * nd.wgrad;
        }
        return out;
      },
      workers);
  LagPass out;
  for (std::size_t i = 0; i < n_lag; ++i) {
    out.Kg_int += lag.wt[i] * slices[i].Kg;
    out.Kgrad_int += lag.wt[i] * slices[i].Kgrad;
  }
  out.K_at_plateau = slices[n_lag].Kg;
  return out;
}

// ---------------------------------------------------------------------------

void check_stability(const DielectricFunction& screen,
                     const PlaneSpectrum& spec, const Vec3& v,
                     const char* op) {
  std::vector<Vec3> dirs = {Vec3::UnitX(), Vec3(1.0, 1.0, 1.0).normalized()};
  if (v.norm() > 1e-12) dirs.push_back(v.normalized());
  for (const Vec3& d : dirs)
    for (double km : {0.05 * spec.k_peak, 0.5 * spec.k_peak, spec.k_peak,
                      2.0 * spec.k_peak}) {
      StabilityReport rep = penrose_check(screen, km * d, 1024);
      if (!rep.stable)
        throw UnstableMedium(op, "screened medium fails the stability sweep");
    }
}

void validate_options(const CoefficientOptions& o, const char* op) {
  if (o.n_hermite < 4 || o.n_radial < 8 || o.n_angular < 8)
    throw ConfigError(op, "quadrature orders too small");
  if (!(o.s_max > 0) || !(o.plateau_lag > 0))
    throw ConfigError(op, "lag parameters must be positive");
}

void validate_regime(const Regime& r, const RadialPotential& p,
                     const VelocityDistribution& g, const char* op) {
  bool coul = p.decay() == RadialPotential::Decay::coulomb_like;
  switch (r.tag) {
    case InteractionTag::finite_range:
      if (coul)
        throw NonIntegrableKernel(
            op,
            "Coulomb tail diverges in the resonant-plane integral; use the "
            "coulomb regime");
      if (!(r.sigma >= 0)) throw ConfigError(op, "sigma must be >= 0");
      if (r.model == MediumModel::interacting && r.sigma > 0 &&
          g.kind() != VelocityDistribution::Kind::maxwellian)
        throw ConfigError(op,
                          "screened finite-range coefficients need a "
                          "Maxwellian background");
      break;
    case InteractionTag::coulomb:
      if (!coul || p.coulomb_amplitude() == 0)
        throw ConfigError(op, "coulomb regime needs a Coulomb-tail profile");
      if (!p.smooth_at_origin())
        throw NonIntegrableKernel(
            op, "gradient energy diverges at the origin; regularize the core");
      break;
    case InteractionTag::grazing:
      if (coul)
        throw NonIntegrableKernel(
            op, "line-autocorrelation integrals diverge for a Coulomb tail");
      break;
  }
}

int theta_order(int n_angular) { return std::max(8, 3 * n_angular / 8); }

void finish(CoefficientResult& out, const Mat3& D, const Mat3& D_half,
            const Vec3& L, const Vec3& L_half, bool want_D, const char* op) {
  if (want_D) {
    PsdRepair rep = psd_clip(sym(D));
    if (rep.clipped > 1e-8 * std::max(rep.value.trace(), 1e-300))
      throw NonPSDDiffusion(op, "diffusion repair exceeds tolerance");
    out.D = rep.value;
    out.psd_clip = rep.clipped;
    out.quad_error_D = (D - D_half).cwiseAbs();
  } else {
    out.Lambda = L;
    out.quad_error_Lambda = (L - L_half).cwiseAbs();
  }
}

CoefficientResult evaluate(const Regime& regime, const Vec3& v,
                           const RadialPotential& profile,
                           const VelocityDistribution& g,
                           const CoefficientOptions& opts, bool want_D,
                           const char* op) {
  validate_options(opts, op);
  validate_regime(regime, profile, g, op);
  CoefficientResult out;
  out.regime = regime;
  out.v = v;
  int nh2 = std::max(8, opts.n_hermite / 2);
  switch (regime.tag) {
    case InteractionTag::finite_range: {
      PlaneSpectrum spec = scan_spectrum(profile, op);
      auto run = [&](const DielectricFunction* screen) {
        PassSums full =
            finite_range_pass(v, profile, g, screen, spec, opts.n_radial,
                              opts.n_angular, opts.workers);
        PassSums half = finite_range_pass(
            v, profile, g, screen, spec, std::max(8, opts.n_radial / 2),
            std::max(8, opts.n_angular / 2), opts.workers);
        finish(out, 2.0 * M_PI * full.Sg, 2.0 * M_PI * half.Sg,
               -M_PI * full.Sgrad, -M_PI * half.Sgrad, want_D, op);
      };
      if (regime.model == MediumModel::interacting && regime.sigma > 0) {
        DielectricFunction screen =
            DielectricFunction::medium(profile, regime.sigma, g);
        check_stability(screen, spec, v, op);
        run(&screen);
      } else {
        run(nullptr);
      }
      break;
    }
    case InteractionTag::coulomb: {
      if (regime.model == MediumModel::interacting) {
        double c = 0.5 * M_PI * sq(profile.coulomb_amplitude());
        int nt = theta_order(opts.n_angular);
        PassSums full =
            radial_shell_pass(v, g, 1.0, 0.0, opts.n_radial, nt,
                              opts.n_angular, opts.workers);
        PassSums half = radial_shell_pass(
            v, g, 1.0, 0.0, std::max(8, opts.n_radial / 2),
            std::max(8, nt / 2), std::max(8, opts.n_angular / 2),
            opts.workers);
        finish(out, c * full.Sg, c * half.Sg, -c * full.Sgrad, -c * half.Sgrad,
               want_D, op);
      } else {
        LagPass full =
            coulomb_lag_pass(v, profile, g, opts.s_max, opts.plateau_lag,
                             opts.n_hermite, 32, 96, opts.workers);
        LagPass half =
            coulomb_lag_pass(v, profile, g, opts.s_max, opts.plateau_lag, nh2,
                             16, 48, opts.workers);
        out.s_cutoff = opts.s_max;
        out.gamma_plateau = opts.plateau_lag * sym(full.K_at_plateau);
        // Two-sided lag integral for the covariance rate, one-sided response
        // integral for the drift.
        finish(out, 2.0 * full.Kg_int, 2.0 * half.Kg_int, -full.Kgrad_int,
               -half.Kgrad_int, want_D, op);
      }
      break;
    }
    case InteractionTag::grazing: {
      double reach =
          std::max(64.0, 2.5 * profile.gradient_support_radius(1e-9));
      auto gc = GradientCorrelation::cached(profile, reach);
      double cp = gc->perp_integral();
      double cl = gc->par_integral();
      int nt = theta_order(opts.n_angular);
      PassSums full = radial_shell_pass(v, g, cp, cl, opts.n_radial, nt,
                                        opts.n_angular, opts.workers);
      PassSums half = radial_shell_pass(
          v, g, cp, cl, std::max(8, opts.n_radial / 2), std::max(8, nt / 2),
          std::max(8, opts.n_angular / 2), opts.workers);
      finish(out, full.Sg, half.Sg, -full.Sgrad, -half.Sgrad, want_D, op);
      break;
    }
  }
  return out;
}

}  // namespace

CoefficientResult diffusion(const Regime& regime, const Vec3& v,
                            const RadialPotential& profile,
                            const VelocityDistribution& g,
                            const CoefficientOptions& opts) {
  return evaluate(regime, v, profile, g, opts, true, "coefficients.diffusion");
}

CoefficientResult friction(const Regime& regime, const Vec3& v,
                           const RadialPotential& profile,
                           const VelocityDistribution& g,
                           const CoefficientOptions& opts) {
  return evaluate(regime, v, profile, g, opts, false, "coefficients.friction");
}

EinsteinReport einstein_consistency(const Regime& regime, const Vec3& v,
                                    const RadialPotential& profile,
                                    const VelocityDistribution& g,
                                    const CoefficientOptions& opts) {
  const char* op = "coefficients.einstein_consistency";
  if (g.kind() != VelocityDistribution::Kind::maxwellian)
    throw ConfigError(
        op, "fluctuation-dissipation check needs a Maxwellian background");
  CoefficientResult d = diffusion(regime, v, profile, g, opts);
  CoefficientResult f = friction(regime, v, profile, g, opts);
  Vec3 full = d.D * ((v - g.mean()) / g.temperature());
  EinsteinReport rep;
  rep.half_exact_expected =
      regime.tag == InteractionTag::finite_range ||
      (regime.tag == InteractionTag::coulomb &&
       regime.model == MediumModel::rayleigh);
  double floor_scale =
      d.D.trace() / (3.0 * std::sqrt(g.temperature()) + 1e-300);
  rep.scale = std::max({f.Lambda.norm(), full.norm(), floor_scale, 1e-300});
  rep.residual_half = (f.Lambda - 0.5 * full).norm() / rep.scale;
  rep.residual_full = (f.Lambda - full).norm() / rep.scale;
  return rep;
}

CoulombLogScales coulomb_log_prefactor(double eps, double beta) {
  const char* op = "coefficients.coulomb_log_prefactor";
  if (!(eps > 0.0 && eps < 1.0))
    throw ConfigError(op, "eps must be in (0, 1)");
  if (!(beta >= 0.0)) throw ConfigError(op, "beta must be >= 0");
  double l = std::log(1.0 / eps);
  CoulombLogScales out;
  out.T_eps = 1.0 / (2.0 * eps * eps * l);
  out.log_L = beta * l;
  out.asymptotic_range_ok = l >= 1.0;
  return out;
}

}  // namespace kinetic
