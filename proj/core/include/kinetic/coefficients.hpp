#pragma once

#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"
#include "kinetic/potentials.hpp"

namespace kinetic {

// Interaction families. finite_range needs a square-integrable force
// spectrum (no Coulomb tail), coulomb expects one, grazing integrates the
// force autocorrelation along straight lines for any integrable profile.
enum class InteractionTag { finite_range, coulomb, grazing };

// rayleigh: the background does not react (bare spectrum). interacting: the
// spectrum is screened by |Delta_sigma|^2 along the resonant line.
enum class MediumModel { rayleigh, interacting };

struct Regime {
  InteractionTag tag = InteractionTag::finite_range;
  MediumModel model = MediumModel::rayleigh;
  // Medium coupling; read only by finite_range/interacting. sigma = 0 is the
  // unscreened limit and must reproduce rayleigh exactly.
  double sigma = 0.0;
};

struct CoefficientOptions {
  int n_hermite = 20;   // per-axis Gauss-Hermite order for Maxwellian w
  int n_radial = 64;    // radial Gauss-Legendre order in the resonant plane
  int n_angular = 64;   // uniform angular nodes in the resonant plane
  double s_max = 1e3;   // Coulomb lag cutoff; the lag integral only grows
                        // logarithmically past it
  double plateau_lag = 316.2277660168379;  // probe lag for gamma_plateau
  int workers = 0;
};

struct CoefficientResult {
  Regime regime;
  Vec3 v = Vec3::Zero();
  // D is the covariance rate: the accumulated-force covariance over a window
  // T grows like eps^2 L^2 T D. The mean velocity drift is -Lambda.
  Mat3 D = Mat3::Zero();
  Vec3 Lambda = Vec3::Zero();
  Mat3 quad_error_D = Mat3::Zero();
  Vec3 quad_error_Lambda = Vec3::Zero();
  double psd_clip = 0;         // eigenvalue repair applied to D
  double skipped_measure = 0;  // background mass dropped near w = v
  // Coulomb/rayleigh only: lag cutoff actually used and the plateau matrix
  // s K(v; s) at plateau_lag whose log-growth is the Coulomb logarithm.
  double s_cutoff = 0;
  Mat3 gamma_plateau = Mat3::Zero();
};

// Velocity-space diffusion matrix of the tagged particle. Throws
// UnstableMedium when the screened medium fails the stability sweep,
// NonIntegrableKernel when the profile makes the defining integral diverge
// (Coulomb tail in finite_range/grazing, singular core in coulomb regimes),
// SingularRelativeVelocity when too much background mass sits at w = v.
CoefficientResult diffusion(const Regime& regime, const Vec3& v,
                            const RadialPotential& profile,
                            const VelocityDistribution& g,
                            const CoefficientOptions& opts = {});

// Friction vector: same kernels with grad g in place of g. The drift of the
// tagged velocity is -Lambda, so Lambda.v > 0 for a centered background.
CoefficientResult friction(const Regime& regime, const Vec3& v,
                           const RadialPotential& profile,
                           const VelocityDistribution& g,
                           const CoefficientOptions& opts = {});

// Fluctuation-dissipation residuals for a Maxwellian background at
// temperature T: residual_half tests Lambda = D (v - u) / (2T), residual_full
// tests Lambda = D (v - u) / T, both relative to `scale`. Which one vanishes
// is a property of the regime's published constants: the pairs whose lag
// integral is two-sided for D and one-sided for Lambda close at half, the
// equal-constant Coulomb pair and the one-sided grazing pair close at full.
struct EinsteinReport {
  double residual_half = 0;
  double residual_full = 0;
  bool half_exact_expected = false;
  double scale = 0;
};
EinsteinReport einstein_consistency(const Regime& regime, const Vec3& v,
                                    const RadialPotential& profile,
                                    const VelocityDistribution& g,
                                    const CoefficientOptions& opts = {});

// Macroscopic normalizations of the weak-coupling Coulomb limit with
// interaction strength eps and screening length eps^{-beta}. Outside the
// asymptotic range (log(1/eps) < 1) the normalization loses meaning and the
// flag turns false.
struct CoulombLogScales {
  double T_eps = 0;   // time normalization 1 / (2 eps^2 log(1/eps))
  double log_L = 0;   // log of the screening length, beta log(1/eps)
  bool asymptotic_range_ok = true;
};
CoulombLogScales coulomb_log_prefactor(double eps, double beta);

}  // namespace kinetic
