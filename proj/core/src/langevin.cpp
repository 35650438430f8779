#include "kinetic/langevin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "kinetic/errors.hpp"
#include "kinetic/forcefield.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {
namespace {

constexpr std::uint64_t kPathTag = 0x6c616e6770617468ull;
constexpr std::uint64_t kCountTag = 0x6e626f6479636e74ull;
constexpr std::uint64_t kScatTag = 0x6e626f6479736374ull;
constexpr std::uint64_t kSeedTag = 0x636d70736565647Bull;

Mat3 checked_sqrt(const char* op, const Mat3& d) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(sym(d));
  double worst = es.eigenvalues().minCoeff();
  double scale = std::max(1e-300, std::abs(es.eigenvalues().sum()));
  if (worst < -1e-8 * scale)
    throw NonPSDDiffusion(op, "diffusion matrix indefinite beyond clip tolerance");
  Vec3 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// (div D)_i = sum_j d_j D_ij by central differences.
Vec3 divergence_D(const std::function<Mat3(const Vec3&)>& D, const Vec3& w) {
  double delta = 1e-4 * (1.0 + w.norm());
  Vec3 out = Vec3::Zero();
  for (int j = 0; j < 3; ++j) {
    Vec3 e = Vec3::Zero();
    e[j] = delta;
    Mat3 diff = D(w + e) - D(w - e);
    out += diff.col(j) / (2.0 * delta);
  }
  return out;
}

void validate_params(const char* op, const LangevinParams& params) {
  if (!params.D || !params.Lambda)
    throw ConfigError(op, "coefficient callbacks must be set");
  if (!(params.dt > 0)) throw ConfigError(op, "time step must be positive");
  if (params.n_out < 2) throw ConfigError(op, "need at least two output times");
}

// Pair interaction tapered to zero at r_cut so periodic images never overlap:
// full strength inside r_cut/2, C^3 ramp outside.
struct TaperedPair {
  const ScaledPotential* pot;
  double r_cut;

  double value(double r) const {
    if (r >= r_cut) return 0.0;
    return pot->value(r) * smoothstep_cutoff(2.0 * r / r_cut);
  }
  double derivative(double r) const {
    if (r >= r_cut) return 0.0;
    double u = 2.0 * r / r_cut;
    return pot->derivative(r) * smoothstep_cutoff(u) +
           pot->value(r) * smoothstep_cutoff_derivative(u) * 2.0 / r_cut;
  }
};

Vec3 min_image(Vec3 d, double box) {
  for (int c = 0; c < 3; ++c) d[c] -= box * std::round(d[c] / box);
  return d;
}

struct Bath {
  std::vector<Vec3> x, v;
};

Bath realize_bath(const NBodySetup& setup, std::uint64_t seed) {
  double mean_count = setup.g.density() * setup.box * setup.box * setup.box;
  Substream counter(seed, stream_id(kCountTag));
  std::uint64_t count = counter.poisson(mean_count);
  if (count > (std::uint64_t(1) << 26))
    throw OverflowingCount("nbody_rayleigh", "scatterer count exceeds budget");
  Bath bath;
  bath.x.resize(count);
  bath.v.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Substream sub(seed, stream_id(i, kScatTag));
    bath.x[i] = setup.box * Vec3(sub.uniform(), sub.uniform(), sub.uniform());
    bath.v[i] = setup.g.sample(sub);
  }
  return bath;
}

// Fills the per-scatterer force reaction and returns the total force on the
// tagged particle, folded over fixed-size blocks in index order so the sum
// does not depend on the worker count.
Vec3 tagged_force(const TaperedPair& pair, double box, const Vec3& xt,
                  const std::vector<Vec3>& xs, std::vector<Vec3>& reaction,
                  int workers) {
  std::size_t n = xs.size();
  constexpr std::size_t kBlock = 4096;
  std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<Vec3> partial = parallel_map<Vec3>(
      n_blocks,
      [&](std::size_t b) {
        Vec3 acc = Vec3::Zero();
        std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) {
          Vec3 d = min_image(xt - xs[i], box);
          double r = d.norm();
          double dphi = (r > 1e-12) ? pair.derivative(r) : 0.0;
          Vec3 f = (r > 1e-12) ? Vec3((-dphi / r) * d) : Vec3::Zero();
          reaction[i] = -f;
          acc += f;
        }
        return acc;
      },
      workers);
  Vec3 total = Vec3::Zero();
  for (const Vec3& p : partial) total += p;
  return total;
}

double total_energy(const TaperedPair& pair, double box, const Vec3& xt,
                    const Vec3& vt, const Bath& bath, int workers) {
  std::size_t n = bath.x.size();
  constexpr std::size_t kBlock = 4096;
  std::size_t n_blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial = parallel_map<double>(
      n_blocks,
      [&](std::size_t b) {
        double acc = 0;
        std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) {
          acc += 0.5 * bath.v[i].squaredNorm();
          acc += pair.value(min_image(xt - bath.x[i], box).norm());
        }
        return acc;
      },
      workers);
  double e = 0.5 * vt.squaredNorm();
  for (double p : partial) e += p;
  return e;
}

}  // namespace

TrajectoryEnsemble integrate_langevin(const LangevinParams& params,
                                      const Vec3& v0, double T,
                                      std::uint64_t seed) {
  const char* op = "integrate_langevin";
  validate_params(op, params);
  if (!(T > 0)) throw ConfigError(op, "horizon must be positive");
  std::size_t n_steps = std::max<std::size_t>(1, std::llround(T / params.dt));
  double h = T / double(n_steps);
  double v_typ = std::max(1.0, v0.norm());
  if (h * params.Lambda(v0).norm() / v_typ >= 0.1)
    throw StepTooCoarse(op, "dt resolves less than a tenth of the drift time");

  int n_out = params.n_out;
  TrajectoryEnsemble ens;
  ens.times.resize(n_out);
  std::vector<std::size_t> rec(n_out);
  for (int j = 0; j < n_out; ++j) {
    rec[j] = (std::size_t(j) * n_steps) / (n_out - 1);
    ens.times[j] = h * double(rec[j]);
  }
  ens.v.assign(params.n_paths, {});
  ens.x.assign(params.n_paths, {});

  parallel_for(
      params.n_paths,
      [&](std::size_t p) {
        Substream sub(seed, stream_id(p, kPathTag));
        Vec3 w = v0, x = Vec3::Zero();
        std::vector<Vec3>& vout = ens.v[p];
        std::vector<Vec3>& xout = ens.x[p];
        vout.resize(n_out);
        xout.resize(n_out);
        int next = 0;
        double sqh = std::sqrt(h);
        for (std::size_t k = 0; k <= n_steps; ++k) {
          while (next < n_out && rec[next] == k) {
            vout[next] = w;
            xout[next] = x;
            ++next;
          }
          if (k == n_steps) break;
          Vec3 drift = -params.Lambda(w);
          if (!params.constant_coefficients)
            drift += 0.5 * divergence_D(params.D, w);
          Mat3 S = checked_sqrt(op, params.D(w));
          Vec3 wnew = w + h * drift + sqh * (S * sub.normal3());
          x += h * w;
          w = wnew;
        }
      },
      params.workers);
  return ens;
}

MomentCurves fokker_planck_moments(const LangevinParams& params,
                                   const VelocityDistribution& f0, double T) {
  const char* op = "fokker_planck_moments";
  validate_params(op, params);
  if (!(T > 0)) throw ConfigError(op, "horizon must be positive");

  Rule1D gh = gauss_hermite(5);
  double wnorm = std::pow(M_PI, -1.5);

  struct State {
    Vec3 mu;
    Mat3 m2;
  };
  auto rhs = [&](const State& s) -> State {
    Mat3 cov = sym(s.m2 - s.mu * s.mu.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    double scale = std::max(1.0, std::abs(es.eigenvalues().sum()));
    if (es.eigenvalues().minCoeff() < -1e-10 * scale)
      throw ClosureBreakdown(op, "closure covariance lost positivity");
    Mat3 A = sqrt_psd(psd_clip(cov).value);

    Vec3 dmu = Vec3::Zero();
    Mat3 dm2 = Mat3::Zero();
    for (std::size_t a = 0; a < gh.size(); ++a)
      for (std::size_t b = 0; b < gh.size(); ++b)
        for (std::size_t c = 0; c < gh.size(); ++c) {
          double wt = wnorm * gh.w[a] * gh.w[b] * gh.w[c];
          Vec3 t(gh.x[a], gh.x[b], gh.x[c]);
          Vec3 w = s.mu + std::sqrt(2.0) * (A * t);
          Vec3 drift = -params.Lambda(w);
          if (!params.constant_coefficients)
            drift += 0.5 * divergence_D(params.D, w);
          dmu += wt * drift;
          dm2 += wt * (params.D(w) + w * drift.transpose() +
                       drift * w.transpose());
        }
    return {dmu, dm2};
  };

  std::size_t n_steps = std::max<std::size_t>(1, std::llround(T / params.dt));
  double h = T / double(n_steps);
  std::size_t stride = std::max<std::size_t>(1, n_steps / 1000);

  State s{f0.mean(), Mat3(f0.temperature() * Mat3::Identity() +
                          f0.mean() * f0.mean().transpose())};
  MomentCurves out;
  auto record = [&](double t) {
    out.times.push_back(t);
    out.mean.push_back(s.mu);
    out.second.push_back(s.m2);
  };
  record(0.0);
  for (std::size_t k = 0; k < n_steps; ++k) {
    State k1 = rhs(s);
    State s2{s.mu + 0.5 * h * k1.mu, s.m2 + 0.5 * h * k1.m2};
    State k2 = rhs(s2);
    State s3{s.mu + 0.5 * h * k2.mu, s.m2 + 0.5 * h * k2.m2};
    State k3 = rhs(s3);
    State s4{s.mu + h * k3.mu, s.m2 + h * k3.m2};
    State k4 = rhs(s4);
    s.mu += (h / 6.0) * (k1.mu + 2.0 * k2.mu + 2.0 * k3.mu + k4.mu);
    s.m2 += (h / 6.0) * (k1.m2 + 2.0 * k2.m2 + 2.0 * k3.m2 + k4.m2);
    if ((k + 1) % stride == 0 || k + 1 == n_steps) record(h * double(k + 1));
  }
  return out;
}

TaggedTrajectory nbody_rayleigh(const NBodySetup& setup, std::uint64_t seed) {
  const char* op = "nbody_rayleigh";
  if (!(setup.box > 0)) throw ConfigError(op, "box must be positive");
  if (setup.box < 4.0 * setup.potential.length_scale())
    throw ConfigError(op, "box must cover four scaling lengths");
  if (!(setup.horizon > 0)) throw ConfigError(op, "horizon must be positive");

  TaperedPair pair{&setup.potential, 0.5 * setup.box};
  Bath bath = realize_bath(setup, seed);

  double v_max = setup.v0.norm();
  for (const Vec3& w : bath.v) v_max = std::max(v_max, w.norm());
  double r_force = std::min(setup.potential.range(1e-8), pair.r_cut);
  double dt_auto = r_force / (20.0 * std::max(v_max, 1e-12));
  double dt = setup.dt > 0 ? setup.dt : dt_auto;
  if (dt > dt_auto * (1.0 + 1e-12))
    throw StepTooCoarse(op, "step exceeds a twentieth of the crossing time");

  std::vector<double> record_times = setup.record_times;
  if (record_times.empty()) record_times = {0.0, setup.horizon};
  for (std::size_t i = 0; i + 1 < record_times.size(); ++i)
    if (record_times[i + 1] < record_times[i])
      throw ConfigError(op, "record times must be nondecreasing");
  if (record_times.front() < 0 || record_times.back() > setup.horizon)
    throw ConfigError(op, "record times must lie within the horizon");

  Vec3 xt = setup.x0, vt = setup.v0;
  std::vector<Vec3> reaction(bath.x.size(), Vec3::Zero());
  Vec3 ft = tagged_force(pair, setup.box, xt, bath.x, reaction, setup.workers);
  double e0 = total_energy(pair, setup.box, xt, vt, bath, setup.workers);
  double e_scale = std::max(std::abs(e0), 1e-300);

  TaggedTrajectory traj;
  traj.n_scatterers = bath.x.size();
  traj.dt = dt;

  double t = 0;
  auto advance_to = [&](double target) {
    if (target <= t) return;
    std::size_t n_sub = std::size_t(std::ceil((target - t) / dt));
    double h = (target - t) / double(n_sub);
    for (std::size_t k = 0; k < n_sub; ++k) {
      vt += (0.5 * h) * ft;
      parallel_for(
          bath.x.size(),
          [&](std::size_t i) {
            bath.v[i] += (0.5 * h) * reaction[i];
            bath.x[i] += h * bath.v[i];
          },
          setup.workers);
      xt += h * vt;
      ft = tagged_force(pair, setup.box, xt, bath.x, reaction, setup.workers);
      vt += (0.5 * h) * ft;
      parallel_for(
          bath.x.size(),
          [&](std::size_t i) { bath.v[i] += (0.5 * h) * reaction[i]; },
          setup.workers);
    }
    t = target;
  };

  for (double rt : record_times) {
    advance_to(rt);
    traj.times.push_back(t);
    traj.x.push_back(xt);
    traj.v.push_back(vt);
    double e = total_energy(pair, setup.box, xt, vt, bath, setup.workers);
    traj.energy_drift = std::max(traj.energy_drift, std::abs(e - e0) / e_scale);
  }
  if (traj.energy_drift > 1e-4)
    throw EnergyDriftExceeded(op, "energy drift above 1e-4 relative");
  return traj;
}

ComparisonReport compare_variance_growth(const RadialPotential& base,
                                         const VelocityDistribution& g,
                                         double eps, double L, double T_macro,
                                         const CompareOptions& opts) {
  const char* op = "compare_variance_growth";
  if (!(eps > 0) || !(L > 0)) throw ConfigError(op, "need positive eps and L");
  if (!(T_macro > 0)) throw ConfigError(op, "need a positive horizon factor");
  if (opts.n_seeds < 2 || opts.n_times < 2)
    throw ConfigError(op, "need at least two seeds and two times");

  double box = 8.0 * L;
  double expected = g.density() * box * box * box;
  if (expected >= 1e7)
    throw BudgetExceeded(op, "expected scatterer count reaches 1e7");

  KernelDiffusion kd = kernel_diffusion(base, g, opts.v0);
  double coupling = eps * eps * L * L;
  double tr_rate = coupling * kd.D.trace();
  double T_kin = tr_rate > 0 ? 9.0 * g.temperature() / tr_rate
                             : std::numeric_limits<double>::infinity();
  double horizon = std::isfinite(T_kin) ? T_macro * T_kin : T_macro;

  ComparisonReport rep;
  rep.T_kinetic = T_kin;
  rep.expected_count = expected;
  rep.n_seeds = opts.n_seeds;
  rep.surrogate_slope = tr_rate;
  rep.times.resize(opts.n_times);
  for (int j = 0; j < opts.n_times; ++j)
    rep.times[j] = horizon * double(j) / double(opts.n_times - 1);

  ScaledPotential pot = ScaledPotential::landau(base, eps, L);
  std::vector<std::vector<Vec3>> curves = parallel_map<std::vector<Vec3>>(
      opts.n_seeds,
      [&](std::size_t s) {
        NBodySetup setup{box,
                         g,
                         pot,
                         0.5 * box * Vec3(1, 1, 1),
                         opts.v0,
                         0,
                         horizon,
                         rep.times,
                         1};
        return nbody_rayleigh(setup, stream_id(opts.seed, s, kSeedTag)).v;
      },
      opts.workers);

  rep.surrogate.resize(opts.n_times);
  rep.nbody.resize(opts.n_times);
  rep.mc_std.resize(opts.n_times);
  for (int j = 0; j < opts.n_times; ++j) {
    RunningMoments m;
    for (std::size_t s = 0; s < opts.n_seeds; ++s)
      m.add((curves[s][j] - opts.v0).squaredNorm());
    rep.surrogate[j] = tr_rate * rep.times[j];
    rep.nbody[j] = m.mean;
    rep.mc_std[j] = m.std_error();
  }

  double lo = opts.window_lo * (std::isfinite(T_kin) ? T_kin : horizon);
  double hi = opts.window_hi * (std::isfinite(T_kin) ? T_kin : horizon);
  double st = 0, stt = 0;
  for (int j = 0; j < opts.n_times; ++j) {
    double t = rep.times[j];
    if (t < lo || t > hi * (1.0 + 1e-12)) continue;
    st += t * rep.nbody[j];
    stt += t * t;
    double pred = rep.surrogate[j];
    double rel;
    if (pred > 0) {
      rel = std::abs(rep.nbody[j] - pred) / pred;
    } else {
      rel = rep.nbody[j] != 0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    rep.max_rel_gap = std::max(rep.max_rel_gap, rel);
  }
  rep.nbody_slope = stt > 0 ? st / stt : 0.0;
  return rep;
}

}  // namespace kinetic
