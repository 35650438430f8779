#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"
#include "kinetic/pointprocess.hpp"
#include "kinetic/potentials.hpp"
#include "kinetic/spline.hpp"

namespace kinetic {

struct ForceSample {
  Vec3 value = Vec3::Zero();
  double truncation_radius = 0;
  std::size_t n_particles_used = 0;
};

// Force on a test charge at x from the flowed configuration, truncated to
// particles whose current position lies within R_trunc of the sample center.
// Requires R_trunc + tau * v_cut <= R so the truncation ball stays inside the
// region the flowed sample still covers; v_cut is the 99.999th speed
// percentile recorded with the species set.
ForceSample force_at(const ParticleConfiguration& config,
                     const SpeciesSet& set, const ScaledPotential& pot,
                     const Vec3& x, double tau, double R_trunc);

// Per-shell force contributions binned by the sampling-time radius |x_k|:
// shell 0 is (0,1], shell j is (2^{j-1}, 2^j]. Their sum reproduces the
// truncated force at radius 2^N exactly when tau = 0.
struct ShellContribution {
  int j = 0;
  Vec3 f = Vec3::Zero();
  std::size_t count = 0;
};
std::vector<ShellContribution> dyadic_shells(const ParticleConfiguration& config,
                                             const ScaledPotential& pot,
                                             const Vec3& x, double tau,
                                             int n_shells);

// Stationary gradient-gradient overlap of the unit-scale profile:
//   M(a) = int grad Phi(xi + a) (x) grad Phi(xi) d xi
//        = m_perp(|a|) (I - aa) + m_par(|a|) aa.
// Radial profiles are tabulated once per (profile, r_max) and splined.
class GradientCorrelation {
 public:
  GradientCorrelation(const RadialPotential& profile, double r_max);

  Mat3 eval(const Vec3& a) const;
  double m_perp(double r) const;
  double m_par(double r) const;
  double r_max() const { return r_max_; }
  // int_0^inf m dr; the transverse part carries the whole lag integral for
  // integrable tails and diverges logarithmically for coulomb decay.
  double perp_integral() const;
  double par_integral() const;
  bool integrable_tail() const { return integrable_; }

  // Shared, memoized by profile cache key and r_max bucket.
  static std::shared_ptr<const GradientCorrelation> cached(
      const RadialPotential& profile, double r_max);

 private:
  double tail(double r, bool par) const;
  CubicSpline perp_, par_;
  double r_max_, tail_coeff_perp_ = 0, tail_coeff_par_ = 0;
  bool integrable_ = true;
};

// Stationary force covariance kernel at lag tau for unit coupling:
//   K(V; tau) = int g(w) M((V - w) tau) dw.
Mat3 kernel_K(const RadialPotential& profile, const VelocityDistribution& g,
              const Vec3& V, double tau, int n_hermite = 20);

struct KernelDiffusion {
  Mat3 D = Mat3::Zero();
  double quad_error = 0;
  double psd_clip = 0;
  double skipped_measure = 0;  // g-mass skipped near |v - w| = 0
};
// Full lag integral int_R K(V; tau) d tau; throws NonIntegrableKernel for
// coulomb-like decay where the lag integral grows logarithmically.
KernelDiffusion kernel_diffusion(const RadialPotential& profile,
                                 const VelocityDistribution& g, const Vec3& V,
                                 int n_hermite = 20);

struct DeflectionOptions {
  double step_dt = 0;           // 0: auto; larger than auto is refused
  int points_per_interaction = 20;
  double tail_fraction = 1e-3;  // capsule radius: gradient-mass tail kept out
  enum class Path { auto_select, brute, capsule, coulomb } path = Path::auto_select;
  int workers = 0;
};

struct DeflectionEnsemble {
  double horizon = 0;
  double sampling_radius = 0;
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  Mat3 covariance_std_error = Mat3::Zero();
  std::vector<Vec3> samples;
  std::size_t n_samples = 0;
};

// Net deflection accumulated over [0, horizon] by a tagged particle dragged
// along the straight line x = V t through independent Poisson backgrounds.
DeflectionEnsemble deflection_mc(const SpeciesSet& set,
                                 const ScaledPotential& pot, const Vec3& V,
                                 double horizon, std::size_t n_samples,
                                 std::uint64_t seed,
                                 const DeflectionOptions& opts = {});

// Deflection of one explicit configuration; exposed so the windowed and the
// dense integrators can be compared on identical particle sets.
Vec3 deflection_of_config(const ParticleConfiguration& config,
                          const ScaledPotential& pot, const Vec3& V,
                          double horizon, double step_dt,
                          bool windowed = true, double window_radius = 0);

struct TubeHitEstimate {
  double time_scale = 0;        // 1 / lambda^2
  double hit_probability_mc = 0;
  double hit_probability_exact = 0;
  std::size_t n_seeds = 0;
};
// First-close-encounter scale for a thin tube of radius lambda around the
// tagged line, with a Monte Carlo check of the hit probability at tau.
TubeHitEstimate estimate_T_BG(const SpeciesSet& set, const Vec3& V,
                              double lambda, double tau, std::size_t n_seeds,
                              std::uint64_t seed);

}  // namespace kinetic
