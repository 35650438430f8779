#include "kinetic/dielectric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "kinetic/errors.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"

namespace kinetic {

namespace {

constexpr int kCauchyOrder = 64;
constexpr double kShift = M_SQRT2;   // contour offset when the pole is close
constexpr double kStripGuard = 0.05; // keep the pole off the shifted contour

const double kTwoPi32 = std::pow(2.0 * M_PI, 1.5);

Cplx cauchy_direct(Cplx alpha) {
  const Rule1D& gh = gauss_hermite(kCauchyOrder);
  Cplx acc = 0.0;
  for (std::size_t i = 0; i < gh.size(); ++i) acc += gh.w[i] / (gh.x[i] - alpha);
  return acc;
}

// contour t = x - i c (c > 0 shifts down, c < 0 up)
Cplx cauchy_shifted(Cplx alpha, double c) {
  const Rule1D& gh = gauss_hermite(kCauchyOrder);
  double boost = std::exp(c * c);
  Cplx acc = 0.0;
  for (std::size_t i = 0; i < gh.size(); ++i) {
    Cplx phase(std::cos(2.0 * c * gh.x[i]), std::sin(2.0 * c * gh.x[i]));
    acc += gh.w[i] * phase / (Cplx(gh.x[i], -c) - alpha);
  }
  return boost * acc;
}

}  // namespace

Cplx gauss_hermite_cauchy(Cplx alpha, int pole_side) {
  if (pole_side >= 0) {
    if (alpha.imag() >= 1.0) return cauchy_direct(alpha);
    if (alpha.imag() <= -kShift + kStripGuard)
      throw OutsideAnalyticStrip("dielectric.cauchy",
                                 "pole reaches the shifted contour");
    return cauchy_shifted(alpha, kShift);
  }
  if (alpha.imag() <= -1.0) return cauchy_direct(alpha);
  if (alpha.imag() >= kShift - kStripGuard)
    throw OutsideAnalyticStrip("dielectric.cauchy",
                               "pole reaches the shifted contour");
  return cauchy_shifted(alpha, -kShift);
}

// ---------------------------------------------------------------------------
// DispersionFunction

DispersionFunction::DispersionFunction(const VelocityDistribution& g,
                                       const Vec3& theta)
    : H_(g.line_marginal(theta)) {
  if (!H_.analytic) {
    double acc = 0.0, first = 0.0;
    for (std::size_t j = 0; j < H_.values.size(); ++j) {
      acc += H_.values[j];
      first += H_.values[j] * (H_.s0 + double(j) * H_.ds);
    }
    mass_ = acc * H_.ds;
    mean_ = mass_ > 0 ? first * H_.ds / mass_ : 0.0;
  }
}

double DispersionFunction::strip_halfwidth() const {
  return H_.analytic ? 2.0 * std::sqrt(H_.T) : 1e-3;
}

Cplx DispersionFunction::psi_maxwellian(Cplx zeta) const {
  double sT = std::sqrt(2.0 * H_.T);
  Cplx a = Cplx(0.0, 1.0) * zeta;
  Cplx alpha = (a - H_.m) / sT;
  Cplx i0 = gauss_hermite_cauchy(alpha, +1);
  return -(H_.n / H_.T) * (1.0 + alpha * i0 / std::sqrt(M_PI));
}

Cplx DispersionFunction::psi_tabulated(Cplx zeta) const {
  if (zeta.real() <= -strip_halfwidth())
    throw OutsideAnalyticStrip("dielectric.dispersion",
                               "tabulated marginals stop at the axis");
  Cplx a = Cplx(0.0, 1.0) * zeta;
  double s0 = H_.s_min(), s1 = H_.s_max();
  double tol = 1e-10 * (1.0 + mass_) * (s1 - s0);
  bool near_pole =
      a.real() > s0 - 0.5 && a.real() < s1 + 0.5 && std::abs(a.imag()) < 1.0;
  if (!near_pole) {
    return adaptive_simpson(
        [&](double s) { return Cplx(H_.derivative(s)) / (s - a); }, s0, s1,
        tol);
  }
  double xi0 = std::clamp(a.real(), s0, s1);
  double hd0 = H_.derivative(xi0);
  auto f = [&](double s) { return Cplx(H_.derivative(s) - hd0) / (s - a); };
  Cplx acc = adaptive_simpson(f, s0, xi0, tol) +
             adaptive_simpson(f, xi0, s1, tol);
  // Im(s - a) keeps one sign along the path, so principal logs subtract safely
  acc += hd0 * (std::log(s1 - a) - std::log(s0 - a));
  return acc;
}

Cplx DispersionFunction::operator()(Cplx zeta) const {
  return H_.analytic ? psi_maxwellian(zeta) : psi_tabulated(zeta);
}

// ---------------------------------------------------------------------------
// DielectricFunction

DielectricFunction::DielectricFunction(RadialPotential profile, double c,
                                       double k_scale, VelocityDistribution g)
    : profile_(std::move(profile)), c_(c), k_scale_(k_scale), g_(std::move(g)) {}

DielectricFunction DielectricFunction::medium(RadialPotential profile,
                                              double sigma,
                                              VelocityDistribution g) {
  if (!(sigma >= 0.0))
    throw ConfigError("dielectric.medium", "coupling must be >= 0");
  return DielectricFunction(std::move(profile), sigma, 1.0, std::move(g));
}

DielectricFunction DielectricFunction::landau_medium(RadialPotential profile,
                                                     double L,
                                                     VelocityDistribution g) {
  if (!(L > 0.0))
    throw ConfigError("dielectric.landau_medium", "scale must be > 0");
  return DielectricFunction(std::move(profile), 2.0 / (L * L), 1.0 / L,
                            std::move(g));
}

DielectricFunction::DirKey DielectricFunction::dir_key(const Vec3& khat) {
  constexpr double q = 1 << 24;
  return {std::int64_t(std::llround(khat[0] * q)),
          std::int64_t(std::llround(khat[1] * q)),
          std::int64_t(std::llround(khat[2] * q))};
}

const DispersionFunction& DielectricFunction::dispersion(
    const Vec3& khat) const {
  DirKey key = dir_key(khat);
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto it = disp_.find(key);
  if (it == disp_.end())
    it = disp_.emplace(key, std::make_shared<DispersionFunction>(g_, khat))
             .first;
  return *it->second;
}

Cplx DielectricFunction::delta(const Vec3& k, Cplx zeta) const {
  double kn = k.norm();
  if (kn < 1e-300)
    throw DegenerateDirection("dielectric.delta", "k must be nonzero");
  Vec3 khat = k / kn;
  const DispersionFunction& psi = dispersion(khat);
  return 1.0 - c_ * kTwoPi32 * profile_.fourier(kn * k_scale_) * psi(zeta / kn);
}

const DielectricFunction::LineCache& DielectricFunction::line_cache(
    const Vec3& khat) const {
  bool analytic = g_.kind() == VelocityDistribution::Kind::maxwellian;
  // Every Maxwellian marginal is the same centered profile shifted by
  // mean.khat, so one table under a fixed key serves all directions (a unit
  // khat never quantizes to the zero key).
  DirKey key = analytic ? DirKey{0, 0, 0} : dir_key(khat);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = caches_.find(key);
    if (it != caches_.end()) return *it->second;
  }
  auto lc = std::make_shared<LineCache>();
  std::size_t n_nodes;
  std::optional<DispersionFunction> centered_psi;
  const DispersionFunction* psi = nullptr;
  if (analytic) {
    double span = 18.0 * std::sqrt(g_.temperature()) + 1.0;
    lc->centered = true;
    lc->lo = -span;
    lc->hi = span;
    lc->n = g_.density();
    lc->m = 0.0;
    n_nodes = 4097;
    centered_psi.emplace(
        VelocityDistribution::maxwellian(g_.density(), Vec3::Zero(),
                                         g_.temperature()),
        khat);
    psi = &*centered_psi;
  } else {
    psi = &dispersion(khat);
    const LineMarginal& H = psi->marginal();
    double pad = 0.1 * (H.s_max() - H.s_min()) + 0.5;
    lc->lo = H.s_min() - pad;
    lc->hi = H.s_max() + pad;
    double acc = 0, first = 0;
    for (std::size_t j = 0; j < H.values.size(); ++j) {
      acc += H.values[j];
      first += H.values[j] * (H.s0 + double(j) * H.ds);
    }
    lc->n = acc * H.ds;
    lc->m = lc->n > 0 ? first * H.ds / lc->n : 0.0;
    n_nodes = 2049;
  }
  std::vector<double> xs(n_nodes), re(n_nodes), im(n_nodes);
  double dx = (lc->hi - lc->lo) / double(n_nodes - 1);
  for (std::size_t j = 0; j < n_nodes; ++j) xs[j] = lc->lo + dx * double(j);
  parallel_for(n_nodes, [&](std::size_t j) {
    Cplx zeta(kEtaCritical, -xs[j]);
    Cplx v = (*psi)(zeta);
    re[j] = v.real();
    im[j] = v.imag();
  });
  lc->re = CubicSpline(xs, re);
  lc->im = CubicSpline(std::move(xs), std::move(im));
  std::lock_guard<std::mutex> lock(cache_mutex_);
  return *caches_.emplace(key, std::move(lc)).first->second;
}

Cplx DielectricFunction::psi_line(const LineCache& lc, double xi) const {
  if (xi >= lc.lo && xi <= lc.hi) return Cplx(lc.re(xi), lc.im(xi));
  Cplx a(xi, kEtaCritical);
  Cplx d = a - lc.m;
  return lc.n / (d * d);
}

Cplx DielectricFunction::delta_critical(const Vec3& khat, double k_mag,
                                        double xi) const {
  if (k_mag <= 0.0)
    throw DegenerateDirection("dielectric.delta_critical", "k must be nonzero");
  const LineCache& lc = line_cache(khat);
  double x = lc.centered ? xi - g_.mean().dot(khat) : xi;
  return 1.0 -
         c_ * kTwoPi32 * profile_.fourier(k_mag * k_scale_) * psi_line(lc, x);
}

double DielectricFunction::xi_lo(const Vec3& khat) const {
  const LineMarginal& H = dispersion(khat).marginal();
  return H.analytic ? H.m - 12.0 * std::sqrt(H.T) - 1.0 : H.s_min() - 1.0;
}

double DielectricFunction::xi_hi(const Vec3& khat) const {
  const LineMarginal& H = dispersion(khat).marginal();
  return H.analytic ? H.m + 12.0 * std::sqrt(H.T) + 1.0 : H.s_max() + 1.0;
}

// ---------------------------------------------------------------------------
// Penrose winding

StabilityReport penrose_check(const DielectricFunction& diel, const Vec3& k,
                              std::size_t n_grid) {
  const char* op = "dielectric.penrose_check";
  double kn = k.norm();
  if (kn < 1e-300) throw DegenerateDirection(op, "k must be nonzero");
  if (n_grid < 16) throw ConfigError(op, "need at least 16 grid points");
  Vec3 khat = k / kn;
  double lo = diel.xi_lo(khat), hi = diel.xi_hi(khat);

  StabilityReport rep;
  rep.min_abs_delta = std::numeric_limits<double>::infinity();
  auto eval = [&](double xi) {
    Cplx d = diel.delta_critical(khat, kn, xi);
    double ab = std::abs(d);
    ++rep.n_points;
    if (ab < rep.min_abs_delta) {
      rep.min_abs_delta = ab;
      rep.xi_at_min = xi;
    }
    return d;
  };

  std::function<double(double, Cplx, double, Cplx, int)> walk =
      [&](double x0, Cplx d0, double x1, Cplx d1, int depth) -> double {
    double step = std::arg(d1 / d0);
    if (std::abs(step) <= M_PI_2) return step;
    if (depth >= 12)
      throw GridTooCoarse(op, "phase turns faster than the refinement limit");
    double xm = 0.5 * (x0 + x1);
    Cplx dm = eval(xm);
    return walk(x0, d0, xm, dm, depth + 1) + walk(xm, dm, x1, d1, depth + 1);
  };

  double total = 0.0;
  double dx = (hi - lo) / double(n_grid - 1);
  Cplx first = eval(lo);
  Cplx prev = first;
  for (std::size_t j = 1; j < n_grid; ++j) {
    double x = lo + dx * double(j);
    Cplx cur = eval(x);
    total += walk(x - dx, prev, x, cur, 0);
    prev = cur;
  }
  total += std::arg(first / prev);  // close through Delta -> 1 at both ends
  rep.winding = int(std::lround(total / (2.0 * M_PI)));
  rep.stable = rep.winding == 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Fundamental solution

Cplx xi_fundamental(const DielectricFunction& diel, const Vec3& k, double w0,
                    Cplx zeta) {
  const char* op = "dielectric.xi_fundamental";
  double kn = k.norm();
  if (kn < 1e-300) throw DegenerateDirection(op, "k must be nonzero");
  Cplx denom = zeta + Cplx(0.0, kn * w0);
  if (std::abs(denom) < 1e-12 * (1.0 + std::abs(zeta)))
    throw AtPole(op, "zeta sits on the free-streaming pole");
  Cplx d = diel.delta(k, zeta);
  if (std::abs(d) < 1e-10)
    throw AtDielectricZero(op, "dielectric vanishes at this mode");
  return 1.0 / (denom * d);
}

FundamentalSolutionGrid xi_time(const DielectricFunction& diel,
                                const Vec3& khat_in, double w0,
                                const std::vector<double>& times,
                                const XiTimeOptions& opts) {
  const char* op = "dielectric.xi_time";
  if (times.empty()) throw ConfigError(op, "need at least one output time");
  for (double t : times)
    if (!(t > 0.0)) throw ConfigError(op, "output times must be > 0");
  if (opts.nx < 8 || opts.nk < 8 || !(opts.k_max > 0.0))
    throw ConfigError(op, "grid options out of range");
  double kn0 = khat_in.norm();
  if (kn0 < 1e-300) throw DegenerateDirection(op, "direction must be nonzero");
  Vec3 khat = khat_in / kn0;

  // growing modes make the Bromwich integral meaningless at any abscissa
  for (double kc : {opts.k_max, 0.5 * opts.k_max, 0.25 * opts.k_max}) {
    StabilityReport rep = penrose_check(diel, kc * khat, 1024);
    if (!rep.stable)
      throw UnstableMedium(op, "growing mode inside the inversion band");
  }

  double t_max = *std::max_element(times.begin(), times.end());
  double vspan =
      std::max({std::abs(diel.xi_lo(khat)), std::abs(diel.xi_hi(khat)),
                std::abs(w0) + 2.0});
  double a = opts.bromwich_a;
  if (!(a > 0.0)) throw ConfigError(op, "bromwich abscissa must be > 0");

  FundamentalSolutionGrid out;
  out.w0 = w0;
  out.a_used = a;
  out.cell = M_PI / opts.k_max;
  out.t = times;
  double x_lo = opts.x_lo, x_hi = opts.x_hi;
  if (!(x_hi > x_lo)) {
    x_lo = std::min(0.0, w0 * t_max) - 30.0 * out.cell - 2.0;
    x_hi = std::max(0.0, w0 * t_max) + 30.0 * out.cell + 2.0;
  }
  out.x.resize(opts.nx);
  for (std::size_t i = 0; i < opts.nx; ++i)
    out.x[i] = x_lo + (x_hi - x_lo) * double(i) / double(opts.nx - 1);

  std::size_t nt = times.size();
  double dk = opts.k_max / double(opts.nk);

  // interaction-part mode amplitudes m_G[ik][it] for one abscissa
  auto invert_modes = [&](double abscissa) {
    std::vector<std::vector<Cplx>> mg(opts.nk, std::vector<Cplx>(nt));
    parallel_for(
        opts.nk,
        [&](std::size_t ik) {
          double kmag = (double(ik) + 0.5) * dk;
          Vec3 kvec = kmag * khat;
          double omega_max = kmag * vspan + 10.0;
          std::size_t n_omega = std::max<std::size_t>(
              opts.n_omega_min,
              std::size_t(std::ceil(8.0 * omega_max * t_max / M_PI)));
          if (n_omega > (std::size_t(1) << 20))
            throw InversionNotConverged(
                op, "time horizon needs more than 2^20 frequency nodes");
          double dw = 2.0 * omega_max / double(n_omega);
          std::vector<Cplx> f_int(n_omega + 1);
          for (std::size_t j = 0; j <= n_omega; ++j) {
            double omega = -omega_max + dw * double(j);
            Cplx zeta(abscissa, omega);
            Cplx dvalue = diel.delta(kvec, zeta);
            Cplx free = 1.0 / (zeta + Cplx(0.0, kmag * w0));
            f_int[j] = free * (1.0 - dvalue) / dvalue;
          }
          for (std::size_t it = 0; it < nt; ++it) {
            double t = times[it];
            Cplx acc = 0.0;
            for (std::size_t j = 0; j <= n_omega; ++j) {
              double omega = -omega_max + dw * double(j);
              double wgt = (j == 0 || j == n_omega) ? 0.5 : 1.0;
              acc += wgt * f_int[j] *
                     Cplx(std::cos(omega * t), std::sin(omega * t));
            }
            mg[ik][it] = acc * dw * std::exp(abscissa * t) / (2.0 * M_PI);
          }
        },
        opts.workers);
    return mg;
  };

  auto modes = invert_modes(a);

  // spatial assembly: midpoint in k, free part closed-form band-limited delta
  out.values.assign(nt, std::vector<double>(opts.nx, 0.0));
  out.values_interaction.assign(nt, std::vector<double>(opts.nx, 0.0));
  out.mass.assign(nt, 0.0);
  out.sup_interaction.assign(nt, 0.0);
  auto assemble = [&](const std::vector<std::vector<Cplx>>& mg, std::size_t it,
                      std::vector<double>& full, std::vector<double>& inter) {
    parallel_for(
        opts.nx,
        [&](std::size_t ix) {
          double x = out.x[ix];
          double acc = 0.0;
          for (std::size_t ik = 0; ik < opts.nk; ++ik) {
            double kmag = (double(ik) + 0.5) * dk;
            acc += (mg[ik][it] * Cplx(std::cos(kmag * x), std::sin(kmag * x)))
                       .real();
          }
          inter[ix] = acc * dk / M_PI;
          double y = x - w0 * times[it];
          double free = std::abs(y) < 1e-12
                            ? opts.k_max / M_PI
                            : std::sin(opts.k_max * y) / (M_PI * y);
          full[ix] = free + inter[ix];
        },
        opts.workers);
  };
  for (std::size_t it = 0; it < nt; ++it) {
    assemble(modes, it, out.values[it], out.values_interaction[it]);
    double hx = out.x[1] - out.x[0];
    double mass = 0.0, sup = 0.0;
    for (std::size_t ix = 0; ix < opts.nx; ++ix) {
      double wgt = (ix == 0 || ix + 1 == opts.nx) ? 0.5 : 1.0;
      mass += wgt * out.values[it][ix];
      sup = std::max(sup, std::abs(out.values_interaction[it][ix]));
    }
    out.mass[it] = mass * hx;
    out.sup_interaction[it] = sup;
  }

  if (opts.bromwich_check > 0.0 && opts.bromwich_check != a) {
    auto modes2 = invert_modes(opts.bromwich_check);
    std::size_t it = nt - 1;
    std::vector<double> full2(opts.nx), inter2(opts.nx);
    assemble(modes2, it, full2, inter2);
    double gap = 0.0;
    for (std::size_t ix = 0; ix < opts.nx; ++ix)
      gap = std::max(gap,
                     std::abs(inter2[ix] - out.values_interaction[it][ix]));
    double scale = std::max(out.sup_interaction[it], 1e-300);
    out.a_check_gap = gap / scale;
    if (out.a_check_gap > 0.05)
      throw InversionNotConverged(op,
                                  "abscissa shift moves the interaction field "
                                  "by more than 5 percent");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Screened response tensor

DielectricTensor dielectric_tensor(const DielectricFunction& diel,
                                   const Vec3& k, double omega) {
  const char* op = "dielectric.tensor";
  double kn = k.norm();
  if (kn < 1e-300) throw DegenerateDirection(op, "k must be nonzero");
  const VelocityDistribution& g = diel.background();
  if (g.kind() != VelocityDistribution::Kind::maxwellian)
    throw ConfigError(op, "plasma reduction needs a Maxwellian background");
  Vec3 khat = k / kn;
  double n = g.density(), T = g.temperature(), m = g.mean().dot(khat);
  double eta = 1e-6;
  Cplx b = -(Cplx(omega, eta)) / kn;
  Cplx beta = (b - m) / std::sqrt(2.0 * T);
  Cplx i0 = gauss_hermite_cauchy(beta, -1);
  Cplx j_scalar = -(n / T) * (1.0 + beta * i0 / std::sqrt(M_PI));
  double coupling = diel.coupling() * std::pow(2.0 * M_PI, 1.5) *
                    diel.profile().fourier(kn * diel.wavenumber_scale());
  Cplx delta_used = 1.0 - coupling * j_scalar;
  if (std::abs(delta_used) < 1e-10)
    throw AtDielectricZero(op, "dielectric vanishes at this mode");
  Cplx chi = coupling * j_scalar / delta_used;
  DielectricTensor out;
  out.delta_used = delta_used;
  Mat3 proj = outer(khat, khat);
  out.eps = Eigen::Matrix3cd::Identity() + chi * proj.cast<Cplx>();
  return out;
}

}  // namespace kinetic
