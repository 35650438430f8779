#include "kinetic/fluctuations.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "kinetic/errors.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"
#include "kinetic/rng.hpp"

namespace kinetic {
namespace {

constexpr std::uint64_t kCellTag = 0x666c75637463656cull;
constexpr std::uint64_t kSampleTag = 0x666c75637365656BULL;

std::uint64_t bits(std::int64_t v) { return static_cast<std::uint64_t>(v); }

Vec3 grid_node(const VelocityGrid& grid, std::size_t iw) {
  int k = int(iw % grid.n[2]);
  int j = int((iw / grid.n[2]) % grid.n[1]);
  int i = int(iw / (std::size_t(grid.n[1]) * grid.n[2]));
  return grid.node(i, j, k);
}

std::vector<double> node_stds(const GaussianFieldSpec& spec) {
  std::size_t nw = spec.wgrid.count();
  double hw = spec.wgrid.h;
  double cell_vol = spec.h_y * spec.h_y * spec.h_y * hw * hw * hw;
  std::vector<double> stds(nw);
  for (std::size_t iw = 0; iw < nw; ++iw) {
    double var =
        spec.covariance_scale * spec.g.value(grid_node(spec.wgrid, iw)) / cell_vol;
    stds[iw] = var > 0 ? std::sqrt(var) : 0.0;
  }
  return stds;
}

double draw_cell(const GaussianFieldSpec& spec,
                 const std::array<std::int64_t, 3>& iy, std::size_t iw,
                 double std_dev) {
  std::uint64_t s1 = stream_id(bits(iy[0]), bits(iy[1]), bits(iy[2]));
  Substream sub(spec.seed, stream_id(s1, iw, kCellTag));
  return std_dev * sub.normal();
}

std::array<std::int64_t, 3> containing_cell(const Vec3& p, double h) {
  return {std::int64_t(std::floor(p[0] / h)), std::int64_t(std::floor(p[1] / h)),
          std::int64_t(std::floor(p[2] / h))};
}

void validate_box(const char* op, const GaussianFieldSpec& spec,
                  const LatticeBox& box) {
  if (spec.h_y <= 0 || spec.wgrid.h <= 0 || spec.wgrid.count() == 0)
    throw ConfigError(op, "field spec needs positive spacings and a velocity grid");
  if (box.n[0] <= 0 || box.n[1] <= 0 || box.n[2] <= 0)
    throw ConfigError(op, "lattice box must have positive extent");
  if (box.count() * spec.wgrid.count() > (std::size_t(1) << 28))
    throw OverflowingCount(op, "field box exceeds the in-memory cell budget");
}

Vec3 radial_gradient(const RadialPotential& profile, const Vec3& x) {
  double r = x.norm();
  if (r < 1e-12) return Vec3::Zero();
  return (profile.derivative(r) / r) * x;
}

// int_0^t gradPhi(a + s b) ds restricted to the part of [0, t] where the
// argument stays inside the gradient support; Simpson panels on that window.
Vec3 response_integral(const RadialPotential& profile, double reach,
                       const Vec3& a, const Vec3& b, double t) {
  double s1 = 0, s2 = t;
  double bb = b.squaredNorm();
  if (bb < 1e-24) {
    if (a.norm() > reach) return Vec3::Zero();
  } else {
    double ab = a.dot(b);
    double disc = ab * ab - bb * (a.squaredNorm() - reach * reach);
    if (disc <= 0) return Vec3::Zero();
    double root = std::sqrt(disc);
    s1 = std::max(0.0, (-ab - root) / bb);
    s2 = std::min(t, (-ab + root) / bb);
    if (s2 <= s1) return Vec3::Zero();
  }
  const int panels = 24;
  double h = (s2 - s1) / panels;
  Vec3 acc = radial_gradient(profile, a + s1 * b) +
             radial_gradient(profile, a + s2 * b);
  for (int i = 1; i < panels; ++i) {
    double w = (i % 2 == 1) ? 4.0 : 2.0;
    acc += w * radial_gradient(profile, a + (s1 + i * h) * b);
  }
  return (h / 3.0) * acc;
}

// rho^4 |phi_hat|^2 support scan on a geometric ladder; the bulk edge marks
// where the dense radial panel ends, the far edge where the tail is gone.
struct PlaneSpectrum {
  double k_peak, k_bulk, k_max;
};

PlaneSpectrum scan_spectrum(const RadialPotential& profile, const char* op) {
  double peak = 0, k_peak = 0;
  double k_bulk = 0, k_max = 0;
  int below = 0;
  double step = std::pow(2.0, 1.0 / 8.0);
  for (double k = std::pow(2.0, -8.0); k <= std::pow(2.0, 17.0); k *= step) {
    double f = profile.fourier(k);
    double val = k * k * k * k * f * f;
    if (val > peak) {
      peak = val;
      k_peak = k;
      k_bulk = 0;
      below = 0;
    }
    if (peak > 0 && k > k_peak) {
      if (k_bulk == 0 && val < 1e-3 * peak) k_bulk = k;
      if (val < 1e-12 * peak) {
        if (++below >= 4) {
          k_max = k;
          break;
        }
      } else {
        below = 0;
      }
    }
  }
  if (peak <= 0 || !std::isfinite(peak))
    throw NonIntegrableKernel(op, "interaction transform carries no weight");
  if (k_max == 0)
    throw NonIntegrableKernel(op, "interaction transform tail does not decay");
  if (k_bulk == 0) k_bulk = k_max;
  return {k_peak, k_bulk, k_max};
}

Rule1D radial_rule(const PlaneSpectrum& sp, int n_radial) {
  Rule1D dense = gauss_legendre_on(n_radial, 0.0, sp.k_bulk);
  if (sp.k_max > sp.k_bulk) {
    Rule1D tail =
        gauss_legendre_on(std::max(8, n_radial / 2), sp.k_bulk, sp.k_max);
    dense.x.insert(dense.x.end(), tail.x.begin(), tail.x.end());
    dense.w.insert(dense.w.end(), tail.w.begin(), tail.w.end());
  }
  return dense;
}

// Angular factors of the sphere average of (khat x khat) exp(-i a khat.nhat):
// coefficient of nhat x nhat and of the transverse projector.
void angular_factors(double a, double& c_par, double& c_perp) {
  double a2 = a * a;
  double A0, A2;
  if (std::abs(a) < 0.2) {
    A0 = 2.0 - a2 / 3.0 + a2 * a2 / 60.0;
    A2 = 2.0 / 3.0 - a2 / 5.0 + a2 * a2 / 84.0;
  } else {
    A0 = 2.0 * std::sin(a) / a;
    A2 = 2.0 * ((a2 - 2.0) * std::sin(a) + 2.0 * a * std::cos(a)) / (a2 * a);
  }
  c_par = A2;
  c_perp = 0.5 * (A0 - A2);
}

struct LineTransform {
  // trapezoid nodes of the centered line marginal over the squared dielectric
  double lo = 0, dxi = 0;
  std::vector<double> q;  // H(xi) / |Delta|^2 * weight
  double mass = 0;        // sum of q, the lag -> 0 limit
};

// Re int H(xi) e^{i omega xi} / |Delta|^2 dxi on a uniform grid, incremental
// phasor with periodic resync. Beyond the grid's resolution the transform of
// the analytic integrand is far below any tolerance here, so it is cut to 0.
double line_transform_eval(const LineTransform& lt, double omega) {
  if (omega == 0) return lt.mass;
  if (std::abs(omega) * lt.dxi > 2.0) return 0.0;
  std::complex<double> z = std::polar(1.0, omega * lt.lo);
  std::complex<double> step = std::polar(1.0, omega * lt.dxi);
  double acc = 0;
  for (std::size_t j = 0; j < lt.q.size(); ++j) {
    if (j % 512 == 0) z = std::polar(1.0, omega * (lt.lo + j * lt.dxi));
    acc += lt.q[j] * z.real();
    z *= step;
  }
  return acc;
}

struct CorrelationPlan {
  Rule1D radial;
  std::vector<double> spectrum;        // rho^4 |phi_hat|^2 at radial nodes
  std::vector<LineTransform> lines;    // per radial node; empty when sigma = 0
  double density = 0, temperature = 0;
  double rel_speed = 0;  // |v - mean|
  Vec3 axis = Vec3(0, 0, 1);
  bool screened = false;
};

CorrelationPlan build_plan(const RadialPotential& profile,
                           const VelocityDistribution& g, const Vec3& v,
                           const ForceCorrelationOptions& opts) {
  const char* op = "force_correlation";
  if (g.kind() != VelocityDistribution::Kind::maxwellian)
    throw ConfigError(op, "force correlation needs a Maxwellian background");
  if (opts.n_radial < 4 || opts.n_xi < 64)
    throw ConfigError(op, "quadrature orders too small");
  if (opts.sigma < 0) throw ConfigError(op, "coupling must be nonnegative");
  Vec3 u = g.mean();
  Vec3 rel = v - u;
  if (opts.sigma > 0 && u.norm() > 1e-12)
    throw ConfigError(op, "screened force correlation needs a centered background");
  if (u.cross(v).norm() > 1e-10 * std::max(1.0, u.norm() * v.norm()))
    throw ConfigError(op, "background mean must be collinear with v");

  CorrelationPlan plan;
  plan.density = g.density();
  plan.temperature = g.temperature();
  plan.rel_speed = rel.norm();
  if (plan.rel_speed > 1e-12) plan.axis = rel / plan.rel_speed;
  plan.screened = opts.sigma > 0;

  PlaneSpectrum sp = scan_spectrum(profile, op);
  plan.radial = radial_rule(sp, opts.n_radial);
  plan.spectrum.resize(plan.radial.size());
  for (std::size_t i = 0; i < plan.radial.size(); ++i) {
    double rho = plan.radial.x[i];
    double f = profile.fourier(rho);
    plan.spectrum[i] = rho * rho * rho * rho * f * f;
  }

  if (plan.screened) {
    DielectricFunction medium = DielectricFunction::medium(profile, opts.sigma, g);
    for (double frac : {0.25, 0.5, 1.0, 2.0}) {
      StabilityReport rep =
          penrose_check(medium, (frac * sp.k_peak) * plan.axis, 1024);
      if (!rep.stable)
        throw UnstableMedium(op, "medium supports a growing mode");
    }
    double span = 13.0 * std::sqrt(plan.temperature) + 1.0;
    int n_xi = opts.n_xi;
    double dxi = 2.0 * span / (n_xi - 1);
    double norm_h =
        plan.density / std::sqrt(2.0 * M_PI * plan.temperature);
    plan.lines.resize(plan.radial.size());
    for (std::size_t i = 0; i < plan.radial.size(); ++i) {
      LineTransform& lt = plan.lines[i];
      lt.lo = -span;
      lt.dxi = dxi;
      lt.q.resize(n_xi);
      for (int j = 0; j < n_xi; ++j) {
        double xi = -span + j * dxi;
        double h = norm_h * std::exp(-0.5 * xi * xi / plan.temperature);
        double d2 = std::norm(
            medium.delta_critical(plan.axis, plan.radial.x[i], xi));
        if (d2 < 1e-2)
          throw UnstableMedium(
              op, "dielectric nearly vanishes on the critical line");
        double w = (j == 0 || j == n_xi - 1) ? 0.5 * dxi : dxi;
        lt.q[j] = w * h / d2;
        lt.mass += lt.q[j];
      }
    }
  }
  return plan;
}

Mat3 correlation_at(const CorrelationPlan& plan, double lag) {
  Mat3 par_proj = plan.axis * plan.axis.transpose();
  Mat3 perp_proj = Mat3::Identity() - par_proj;
  Mat3 acc = Mat3::Zero();
  for (std::size_t i = 0; i < plan.radial.size(); ++i) {
    double rho = plan.radial.x[i];
    double re_w;
    if (plan.screened) {
      re_w = line_transform_eval(plan.lines[i], rho * lag);
    } else {
      double arg = rho * lag;
      re_w = plan.density * std::exp(-0.5 * plan.temperature * arg * arg);
    }
    if (re_w == 0) continue;
    double c_par, c_perp;
    angular_factors(rho * plan.rel_speed * lag, c_par, c_perp);
    acc += (plan.radial.w[i] * plan.spectrum[i] * re_w) *
           (c_par * par_proj + c_perp * perp_proj);
  }
  return 2.0 * M_PI * acc;
}

}  // namespace

double cell_std(const GaussianFieldSpec& spec, std::size_t iw) {
  double hw = spec.wgrid.h;
  double cell_vol = spec.h_y * spec.h_y * spec.h_y * hw * hw * hw;
  double var =
      spec.covariance_scale * spec.g.value(grid_node(spec.wgrid, iw)) / cell_vol;
  return var > 0 ? std::sqrt(var) : 0.0;
}

double noise_cell(const GaussianFieldSpec& spec,
                  const std::array<std::int64_t, 3>& iy, std::size_t iw) {
  return draw_cell(spec, iy, iw, cell_std(spec, iw));
}

FluctuationField sample_N(const GaussianFieldSpec& spec, const LatticeBox& box,
                          int workers) {
  validate_box("sample_N", spec, box);
  std::vector<double> stds = node_stds(spec);
  std::size_t nw = spec.wgrid.count();

  FluctuationField field{spec, box, FluctuationField::Provenance::zeta1, 0, {}};
  field.values.resize(box.count() * nw);
  parallel_for(
      box.count(),
      [&](std::size_t cell) {
        std::size_t iz = cell % box.n[2];
        std::size_t iy = (cell / box.n[2]) % box.n[1];
        std::size_t ix = cell / (std::size_t(box.n[1]) * box.n[2]);
        std::array<std::int64_t, 3> idx = {box.lo[0] + std::int64_t(ix),
                                           box.lo[1] + std::int64_t(iy),
                                           box.lo[2] + std::int64_t(iz)};
        double* slot = field.values.data() + cell * nw;
        for (std::size_t w = 0; w < nw; ++w)
          slot[w] = draw_cell(spec, idx, w, stds[w]);
      },
      workers);
  return field;
}

FluctuationField evolve_zeta1(const FluctuationField& field, double t) {
  if (field.provenance != FluctuationField::Provenance::zeta1)
    throw ConfigError("evolve_zeta1", "input must carry the initial noise");
  const GaussianFieldSpec& spec = field.spec;
  validate_box("evolve_zeta1", spec, field.box);
  std::vector<double> stds = node_stds(spec);
  std::size_t nw = spec.wgrid.count();

  // Backtracing a cell center by w t shifts every cell of a w-slice by the
  // same lattice offset, so the one-time law is exactly transport invariant.
  std::vector<std::array<std::int64_t, 3>> shift(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    Vec3 node = grid_node(spec.wgrid, w);
    for (int c = 0; c < 3; ++c)
      shift[w][c] = std::int64_t(std::floor(0.5 - node[c] * t / spec.h_y));
  }

  FluctuationField out{spec, field.box, FluctuationField::Provenance::zeta1, t, {}};
  out.values.resize(field.values.size());
  const LatticeBox& box = field.box;
  parallel_for(box.count(), [&](std::size_t cell) {
    std::size_t iz = cell % box.n[2];
    std::size_t iy = (cell / box.n[2]) % box.n[1];
    std::size_t ix = cell / (std::size_t(box.n[1]) * box.n[2]);
    std::array<std::int64_t, 3> idx = {box.lo[0] + std::int64_t(ix),
                                       box.lo[1] + std::int64_t(iy),
                                       box.lo[2] + std::int64_t(iz)};
    double* slot = out.values.data() + cell * nw;
    for (std::size_t w = 0; w < nw; ++w) {
      std::array<std::int64_t, 3> src = {idx[0] + shift[w][0],
                                         idx[1] + shift[w][1],
                                         idx[2] + shift[w][2]};
      slot[w] = draw_cell(spec, src, w, stds[w]);
    }
  });
  return out;
}

double rho1(const GaussianFieldSpec& spec, const Vec3& y, double t) {
  std::vector<double> stds = node_stds(spec);
  std::size_t nw = spec.wgrid.count();
  double hw3 = spec.wgrid.h * spec.wgrid.h * spec.wgrid.h;
  double acc = 0;
  for (std::size_t w = 0; w < nw; ++w) {
    if (stds[w] == 0) continue;
    Vec3 p = y - t * grid_node(spec.wgrid, w);
    acc += draw_cell(spec, containing_cell(p, spec.h_y), w, stds[w]);
  }
  return hw3 * acc;
}

RunningMoments density_correlation_mc(const GaussianFieldSpec& spec,
                                      const Vec3& y1, double t1, const Vec3& y2,
                                      double t2, std::size_t n_samples,
                                      int workers) {
  std::vector<double> products = parallel_map<double>(
      n_samples,
      [&](std::size_t s) {
        GaussianFieldSpec draw = spec;
        draw.seed = stream_id(spec.seed, s, kSampleTag);
        return rho1(draw, y1, t1) * rho1(draw, y2, t2);
      },
      workers);
  RunningMoments m;
  for (double p : products) m.add(p);
  return m;
}

FluctuationField zeta2_response(const GaussianFieldSpec& spec,
                                const RadialPotential& profile, double theta,
                                const Vec3& V0, double t, const LatticeBox& box,
                                int workers) {
  validate_box("zeta2_response", spec, box);
  double reach = profile.gradient_support_radius(1e-9);
  std::size_t nw = spec.wgrid.count();
  std::vector<Vec3> nodes(nw), grads(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    nodes[w] = grid_node(spec.wgrid, w);
    grads[w] = spec.g.gradient(nodes[w]);
  }

  FluctuationField out{spec, box, FluctuationField::Provenance::zeta2, t, {}};
  out.values.resize(box.count() * nw);
  parallel_for(
      box.count(),
      [&](std::size_t cell) {
        std::size_t iz = cell % box.n[2];
        std::size_t iy = (cell / box.n[2]) % box.n[1];
        std::size_t ix = cell / (std::size_t(box.n[1]) * box.n[2]);
        Vec3 center((box.lo[0] + std::int64_t(ix) + 0.5) * spec.h_y,
                    (box.lo[1] + std::int64_t(iy) + 0.5) * spec.h_y,
                    (box.lo[2] + std::int64_t(iz) + 0.5) * spec.h_y);
        double* slot = out.values.data() + cell * nw;
        for (std::size_t w = 0; w < nw; ++w) {
          Vec3 kick = response_integral(profile, reach, center - t * nodes[w],
                                        nodes[w] - V0, t);
          slot[w] = theta * grads[w].dot(kick);
        }
      },
      workers);
  return out;
}

Vec3 zeta2_force(const GaussianFieldSpec& spec, const RadialPotential& profile,
                 double theta, const Vec3& V0, double t, int workers) {
  validate_box("zeta2_force", spec, {{0, 0, 0}, {1, 1, 1}});
  double reach = profile.gradient_support_radius(1e-9);
  Vec3 x0 = t * V0;
  std::array<std::int64_t, 2> span[3];
  for (int c = 0; c < 3; ++c) {
    span[c] = {std::int64_t(std::floor((x0[c] - reach) / spec.h_y)) - 1,
               std::int64_t(std::floor((x0[c] + reach) / spec.h_y)) + 1};
  }
  std::vector<std::array<std::int64_t, 3>> cells;
  for (std::int64_t i = span[0][0]; i <= span[0][1]; ++i)
    for (std::int64_t j = span[1][0]; j <= span[1][1]; ++j)
      for (std::int64_t k = span[2][0]; k <= span[2][1]; ++k) {
        Vec3 center((i + 0.5) * spec.h_y, (j + 0.5) * spec.h_y,
                    (k + 0.5) * spec.h_y);
        if ((x0 - center).norm() <= reach) cells.push_back({i, j, k});
      }

  std::size_t nw = spec.wgrid.count();
  std::vector<Vec3> nodes(nw), grads(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    nodes[w] = grid_node(spec.wgrid, w);
    grads[w] = spec.g.gradient(nodes[w]);
  }
  double hy3 = spec.h_y * spec.h_y * spec.h_y;
  double hw3 = spec.wgrid.h * spec.wgrid.h * spec.wgrid.h;

  std::vector<Vec3> partial = parallel_map<Vec3>(
      cells.size(),
      [&](std::size_t c) {
        const auto& idx = cells[c];
        Vec3 center((idx[0] + 0.5) * spec.h_y, (idx[1] + 0.5) * spec.h_y,
                    (idx[2] + 0.5) * spec.h_y);
        double rho2 = 0;
        for (std::size_t w = 0; w < nw; ++w) {
          Vec3 kick = response_integral(profile, reach, center - t * nodes[w],
                                        nodes[w] - V0, t);
          rho2 += grads[w].dot(kick);
        }
        rho2 *= theta * hw3;
        return Vec3((-hy3 * rho2) * radial_gradient(profile, x0 - center));
      },
      workers);
  Vec3 force = Vec3::Zero();
  for (const Vec3& p : partial) force += p;
  return force;
}

FluctuationField field_sum(const FluctuationField& a, const FluctuationField& b) {
  const char* op = "field_sum";
  bool same_spec = a.spec.h_y == b.spec.h_y && a.spec.seed == b.spec.seed &&
                   a.spec.covariance_scale == b.spec.covariance_scale &&
                   a.spec.wgrid.h == b.spec.wgrid.h &&
                   a.spec.wgrid.n == b.spec.wgrid.n &&
                   (a.spec.wgrid.lo - b.spec.wgrid.lo).norm() == 0;
  if (!same_spec || a.box.lo != b.box.lo || a.box.n != b.box.n)
    throw ConfigError(op, "fields must share spec and box");
  if (a.time != b.time) throw ConfigError(op, "fields must share the same time");
  FluctuationField out = a;
  out.provenance = FluctuationField::Provenance::sum;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] += b.values[i];
  return out;
}

std::vector<Mat3> force_correlation_fourier(const RadialPotential& profile,
                                            const VelocityDistribution& g,
                                            const Vec3& v,
                                            const std::vector<double>& lags,
                                            const ForceCorrelationOptions& opts) {
  CorrelationPlan plan = build_plan(profile, g, v, opts);
  return parallel_map<Mat3>(
      lags.size(), [&](std::size_t i) { return correlation_at(plan, lags[i]); },
      opts.workers);
}

Mat3 force_correlation_lag_integral(const RadialPotential& profile,
                                    const VelocityDistribution& g,
                                    const Vec3& v, double L,
                                    const ForceCorrelationOptions& opts) {
  if (L <= 0)
    throw ConfigError("force_correlation", "lag window must be positive");
  CorrelationPlan plan = build_plan(profile, g, v, opts);
  std::vector<double> lags;
  double dense_end = std::min(20.0, L);
  for (double s = 0; s < dense_end; s += 0.025) lags.push_back(s);
  lags.push_back(dense_end);
  if (L > dense_end) {
    for (double s = dense_end + 0.25; s < L; s += 0.25) lags.push_back(s);
    lags.push_back(L);
  }
  std::vector<Mat3> corr = parallel_map<Mat3>(
      lags.size(), [&](std::size_t i) { return correlation_at(plan, lags[i]); },
      opts.workers);
  // C(-lag) = C(lag)^T, so the two-sided integral is twice the symmetric part.
  Mat3 acc = Mat3::Zero();
  for (std::size_t i = 0; i + 1 < lags.size(); ++i)
    acc += 0.5 * (lags[i + 1] - lags[i]) * (corr[i] + corr[i + 1]);
  return sym(acc) * 2.0;
}

}  // namespace kinetic
