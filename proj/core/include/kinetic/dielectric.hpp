#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"
#include "kinetic/potentials.hpp"
#include "kinetic/spline.hpp"

namespace kinetic {

using Cplx = std::complex<double>;

// int e^{-t^2} / (t - alpha) dt over a contour that keeps the pole on
// pole_side of it (+1: pole above, the Laplace / retarded convention;
// -1: pole below). The contour shifts off the real axis by sqrt(2) when the
// pole comes close; past that the continuation leaves the evaluable strip.
Cplx gauss_hermite_cauchy(Cplx alpha, int pole_side);

// One-sided dispersion integral of a line marginal H along theta:
//   Psi(zeta) = int H'(s) / (s - i zeta) ds,   Re zeta > 0,
// continued analytically down to Re zeta > -strip_halfwidth().
class DispersionFunction {
 public:
  DispersionFunction(const VelocityDistribution& g, const Vec3& theta);

  Cplx operator()(Cplx zeta) const;
  // Maxwellian marginals continue to Re zeta > -2 sqrt(T); tabulated
  // marginals stop just past the axis.
  double strip_halfwidth() const;
  const LineMarginal& marginal() const { return H_; }

 private:
  Cplx psi_maxwellian(Cplx zeta) const;
  Cplx psi_tabulated(Cplx zeta) const;
  LineMarginal H_;
  double mass_ = 0, mean_ = 0;  // tabulated asymptotics
};

// Scalar dielectric of a homogeneous background:
//   Delta(k, zeta) = 1 - c (2 pi)^{3/2} PhiHat(|k| k_scale) Psi(zeta / |k|)
// with Psi the dispersion integral along khat. The sign convention makes a
// positive-transform (repulsive) Maxwellian medium strictly stable: the
// static value is 1 + c (2 pi)^{3/2} PhiHat n / T.
class DielectricFunction {
 public:
  // coupling sigma, potential transform taken at |k| itself
  static DielectricFunction medium(RadialPotential profile, double sigma,
                                   VelocityDistribution g);
  // weak-coupling long-range normalization: c = 2 / L^2, transform at |k| / L
  static DielectricFunction landau_medium(RadialPotential profile, double L,
                                          VelocityDistribution g);

  Cplx delta(const Vec3& k, Cplx zeta) const;

  // Delta on the critical line zeta = |k| (eta - i xi), xi in velocity units;
  // served from a per-direction spline of the dispersion integral.
  Cplx delta_critical(const Vec3& khat, double k_mag, double xi) const;

  // velocity span of the marginal structure along khat
  double xi_lo(const Vec3& khat) const;
  double xi_hi(const Vec3& khat) const;

  double coupling() const { return c_; }
  double wavenumber_scale() const { return k_scale_; }
  const RadialPotential& profile() const { return profile_; }
  const VelocityDistribution& background() const { return g_; }

  static constexpr double kEtaCritical = 1e-6;  // critical-line regulator

 private:
  DielectricFunction(RadialPotential profile, double c, double k_scale,
                     VelocityDistribution g);

  struct LineCache {
    CubicSpline re, im;
    double lo = 0, hi = 0;
    double n = 0, m = 0;  // asymptotics beyond the table
    // Maxwellian marginals share one table centered at mean 0; the lookup
    // shifts by mean.khat instead of building a cache per direction.
    bool centered = false;
  };
  using DirKey = std::array<std::int64_t, 3>;
  static DirKey dir_key(const Vec3& khat);
  const DispersionFunction& dispersion(const Vec3& khat) const;
  const LineCache& line_cache(const Vec3& khat) const;
  Cplx psi_line(const LineCache& lc, double xi) const;

  RadialPotential profile_;
  double c_ = 0, k_scale_ = 1;
  VelocityDistribution g_;
  mutable std::mutex cache_mutex_;
  mutable std::map<DirKey, std::shared_ptr<DispersionFunction>> disp_;
  mutable std::map<DirKey, std::shared_ptr<LineCache>> caches_;
};

// Winding of Delta along the critical line of one mode. Zero winding means no
// growing root behind the resolved line; the phase walk refines itself
// wherever a step turns faster than pi/2.
struct StabilityReport {
  bool stable = true;
  int winding = 0;
  double min_abs_delta = 0;
  double xi_at_min = 0;
  std::size_t n_points = 0;
};
StabilityReport penrose_check(const DielectricFunction& diel, const Vec3& k,
                              std::size_t n_grid = 2048);

// Laplace-side fundamental mode of a delta seed streaming at w0 along khat:
//   F(k, zeta) = 1 / ((zeta + i |k| w0) Delta(k, zeta)).
Cplx xi_fundamental(const DielectricFunction& diel, const Vec3& k, double w0,
                    Cplx zeta);

struct XiTimeOptions {
  double x_lo = 0, x_hi = 0;  // equal: auto window around the streamed seed
  std::size_t nx = 512;
  double k_max = 12.0;
  std::size_t nk = 256;
  double bromwich_a = 0.5;
  double bromwich_check = 1.0;  // <= 0 disables the second-abscissa check
  std::size_t n_omega_min = 4096;
  int workers = 0;
};

// Time-domain fundamental solution on a 1D section along khat. values holds
// the full field, values_interaction the part beyond free streaming; the
// free part is the band-limited delta at x = w0 t and needs no inversion.
struct FundamentalSolutionGrid {
  std::vector<double> x, t;
  std::vector<std::vector<double>> values;              // [it][ix]
  std::vector<std::vector<double>> values_interaction;  // [it][ix]
  std::vector<double> mass;                             // per time
  std::vector<double> sup_interaction;                  // per time
  double w0 = 0, a_used = 0, a_check_gap = 0;
  double cell = 0;  // pi / k_max, the mollification width
};
FundamentalSolutionGrid xi_time(const DielectricFunction& diel,
                                const Vec3& khat, double w0,
                                const std::vector<double>& times,
                                const XiTimeOptions& opts = {});

// Screened response tensor of a Maxwellian medium at real frequency omega:
//   eps(k, omega) = I + c (2 pi)^{3/2} PhiHat J / Delta (khat x khat),
// evaluated through the Maxwellian plasma reduction of J rather than the
// dispersion spline, so the two routes check each other.
struct DielectricTensor {
  Eigen::Matrix3cd eps = Eigen::Matrix3cd::Identity();
  Cplx delta_used{1.0, 0.0};
};
DielectricTensor dielectric_tensor(const DielectricFunction& diel,
                                   const Vec3& k, double omega);

}  // namespace kinetic
