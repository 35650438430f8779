#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"
#include "kinetic/potentials.hpp"

namespace kinetic {

// Surrogate velocity dynamics with state-dependent coefficients:
//   dw = [-Lambda(w) + 1/2 div D(w)] dt + S(w) dW,   S S^T = D,
//   dx = w dt.
// The divergence correction makes the ensemble law solve the divergence-form
// equation  d_t f = d_w . (1/2 D d_w f + Lambda f); set constant_coefficients
// when D does not depend on w to skip the finite differences.
struct LangevinParams {
  std::function<Mat3(const Vec3&)> D;
  std::function<Vec3(const Vec3&)> Lambda;
  double dt = 1e-3;
  std::size_t n_paths = 1;
  bool constant_coefficients = false;
  int n_out = 101;  // recorded times per path, evenly spread over [0, T]
  int workers = 0;
};

struct TrajectoryEnsemble {
  std::vector<double> times;
  std::vector<std::vector<Vec3>> v;  // [path][time]
  std::vector<std::vector<Vec3>> x;
};

// Euler-Maruyama ensemble started at v0; path p draws its noise from
// substream (seed, p), so results are independent of worker count.
TrajectoryEnsemble integrate_langevin(const LangevinParams& params,
                                      const Vec3& v0, double T,
                                      std::uint64_t seed);

struct MomentCurves {
  std::vector<double> times;
  std::vector<Vec3> mean;
  std::vector<Mat3> second;  // E[w w^T]
};

// First and second moments of the divergence-form equation under a Gaussian
// closure: expectations of D and Lambda are taken over the normal law with
// the current mean and covariance (Gauss-Hermite nodes), and the closed ODEs
//   d<w>/dt    = <-Lambda + 1/2 div D>
//   d<w w>/dt  = <D> + 2 sym(<w (x) (-Lambda + 1/2 div D)>)
// advance by Runge-Kutta 4 with step params.dt.
MomentCurves fokker_planck_moments(const LangevinParams& params,
                                   const VelocityDistribution& f0, double T);

// Tagged particle in a bath of mutually non-interacting scatterers: the pair
// force acts only between the tagged particle and each scatterer, with the
// reaction on the scatterer kept so momentum is conserved. Periodic box with
// minimum-image displacements; the pair potential is tapered smoothly to zero
// at box/2 so images never act twice. All masses are 1.
struct NBodySetup {
  double box = 0;            // periodic edge length, >= 4 x scaling length
  VelocityDistribution g;    // scatterer law; spatial intensity g.density()
  ScaledPotential potential;
  Vec3 x0 = Vec3::Zero();    // tagged initial state
  Vec3 v0 = Vec3::Zero();
  double dt = 0;             // 0: range / (20 v_max); coarser steps are refused
  double horizon = 0;
  std::vector<double> record_times;  // defaults to {0, horizon}
  int workers = 0;           // force-sum parallelism, deterministic fold order
};

struct TaggedTrajectory {
  std::vector<double> times;
  std::vector<Vec3> x, v;
  double energy_drift = 0;   // max |E(t) - E(0)| / |E(0)| seen at checkpoints
  std::size_t n_scatterers = 0;
  double dt = 0;             // substep actually used
};

// Velocity-Verlet integration of one realization; scatterer count is Poisson
// with mean intensity * box^3, positions uniform, velocities drawn from g.
// Deterministic per seed and worker count. Throws EnergyDriftExceeded when
// the checkpoint energy drifts by more than 1e-4 relative.
TaggedTrajectory nbody_rayleigh(const NBodySetup& setup, std::uint64_t seed);

struct ComparisonReport {
  std::vector<double> times;
  std::vector<double> surrogate;     // predicted trace covariance
  std::vector<double> nbody;         // ensemble trace covariance
  std::vector<double> mc_std;        // std error of the nbody trace
  double max_rel_gap = 0;            // on the fit window
  double surrogate_slope = 0;        // eps^2 L^2 tr D(v0)
  double nbody_slope = 0;            // through-origin fit on the window
  double T_kinetic = 0;
  double expected_count = 0;
  std::size_t n_seeds = 0;
};

struct CompareOptions {
  Vec3 v0 = Vec3(1, 0, 0);
  std::size_t n_seeds = 500;
  int n_times = 21;
  double window_lo = 0.1, window_hi = 0.5;  // fractions of T_kinetic
  std::uint64_t seed = 1;
  int workers = 0;
};

// Ensemble N-body velocity covariance against the surrogate growth law
//   Cov(t) ~ eps^2 L^2 D(v0) t,
// with D the lag integral of the force covariance kernel of the unscaled
// profile. The horizon is T_macro * T_kinetic, where T_kinetic is the
// relaxation estimate 9 T / (eps^2 L^2 tr D); a vanishing interaction makes
// that infinite and T_macro is then used as the absolute horizon. Throws
// BudgetExceeded when the expected scatterer count reaches 1e7.
ComparisonReport compare_variance_growth(const RadialPotential& base,
                                         const VelocityDistribution& g,
                                         double eps, double L, double T_macro,
                                         const CompareOptions& opts = {});

}  // namespace kinetic
