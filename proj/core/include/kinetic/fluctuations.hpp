#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kinetic/dielectric.hpp"
#include "kinetic/distributions.hpp"
#include "kinetic/linalg.hpp"
#include "kinetic/potentials.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {

// Gaussian white noise on a phase-space lattice. Space is an infinite cubic
// lattice of spacing h_y; velocity lives on the finite uniform grid wgrid.
// Each cell holds an independent centered Gaussian with variance
//   covariance_scale * g(w) / (h_y^3 h_w^3),
// so block averages of the lattice field reproduce the density fluctuations
// of a Poisson cloud with intensity g in the small-cell limit.
//
// Cell values are a pure function of (seed, cell index), so any single cell
// can be drawn lazily without materializing a box, and a materialized box
// agrees with the lazy values bit for bit.
struct GaussianFieldSpec {
  VelocityDistribution g;
  VelocityGrid wgrid{Vec3(-4.0, -4.0, -4.0), 0.25, {33, 33, 33}};
  double h_y = 0.5;
  double covariance_scale = 1.0;
  std::uint64_t seed = 0;
};

// Axis-aligned box of spatial lattice cells: indices lo[c] .. lo[c]+n[c]-1.
// Cell (i,j,k) covers [i h_y, (i+1) h_y) x ... and has center (i+0.5) h_y.
struct LatticeBox {
  std::array<std::int64_t, 3> lo{};
  std::array<int, 3> n{};
  std::size_t count() const {
    return std::size_t(n[0]) * std::size_t(n[1]) * std::size_t(n[2]);
  }
};

// A fluctuation field on a spatial box times the full velocity grid.
// provenance records which linearization term the values carry:
//   zeta1  free-flow transport of the initial noise,
//   zeta2  deterministic response driven by the interaction,
//   sum    a superposition of the two.
struct FluctuationField {
  enum class Provenance { zeta1, zeta2, sum };

  GaussianFieldSpec spec;
  LatticeBox box;
  Provenance provenance = Provenance::zeta1;
  double time = 0;
  // layout: ((ix * n[1] + iy) * n[2] + iz) * wgrid.count() + iw,
  // with iw the VelocityGrid::index flattening.
  std::vector<double> values;

  double at(int ix, int iy, int iz, std::size_t iw) const {
    return values[((std::size_t(ix) * box.n[1] + iy) * box.n[2] + iz) *
                      spec.wgrid.count() +
                  iw];
  }
};

// Standard deviation of one cell for velocity node iw.
double cell_std(const GaussianFieldSpec& spec, std::size_t iw);

// Lazy cell draw: the initial noise at spatial lattice cell iy (any cell of
// the infinite lattice) and velocity node iw.
double noise_cell(const GaussianFieldSpec& spec,
                  const std::array<std::int64_t, 3>& iy, std::size_t iw);

// Materializes the initial noise on a box. Deterministic in spec.seed and
// independent of traversal order or worker count.
FluctuationField sample_N(const GaussianFieldSpec& spec, const LatticeBox& box,
                          int workers = 0);

// Free-flow transport of the initial noise: the value at (y, w, t) is the
// initial cell value at the cell containing y - w t (nearest cell, no
// interpolation). The input must carry provenance zeta1; its box is reused.
FluctuationField evolve_zeta1(const FluctuationField& field, double t);

// Velocity-integrated field (density fluctuation) at an arbitrary point,
// evaluated lazily through the same cell draws:
//   rho1(y, t) = sum_w h_w^3 N(cell(y - w t), w).
double rho1(const GaussianFieldSpec& spec, const Vec3& y, double t);

// Monte Carlo estimate of E[rho1(y1,t1) rho1(y2,t2)] over independent seeds.
RunningMoments density_correlation_mc(const GaussianFieldSpec& spec,
                                      const Vec3& y1, double t1, const Vec3& y2,
                                      double t2, std::size_t n_samples,
                                      int workers = 0);

// Deterministic response of the field to a straight-line source moving at V0
// through the interaction profile:
//   zeta2(y, w, t) = theta grad_w g(w) . int_0^t grad Phi(y - w(t-s) - V0 s) ds,
// evaluated per cell with Simpson panels on the part of [0, t] where the
// argument lies inside the gradient support. Vanishes identically at t = 0
// and for a vanishing profile.
FluctuationField zeta2_response(const GaussianFieldSpec& spec,
                                const RadialPotential& profile, double theta,
                                const Vec3& V0, double t, const LatticeBox& box,
                                int workers = 0);

// Force exerted back on the moving source by its own response field:
//   F(t) = - sum_y h_y^3 grad Phi(V0 t - y) rho[zeta2](y, t),
// with the spatial sum restricted to cells within the gradient support of the
// profile around V0 t. For long times this converges to minus the drag
// coefficient contracted with V0 scaled by theta.
Vec3 zeta2_force(const GaussianFieldSpec& spec, const RadialPotential& profile,
                 double theta, const Vec3& V0, double t, int workers = 0);

// Superposition of two fields on the same spec, box, and time.
FluctuationField field_sum(const FluctuationField& a, const FluctuationField& b);

struct ForceCorrelationOptions {
  double sigma = 0;     // response coupling; 0 means bare transport
  int n_radial = 64;    // Gauss-Legendre panels per radial segment
  int n_xi = 2048;      // trapezoid nodes for the line-marginal transform
  int workers = 0;
};

// Stationary force-force correlation of a tagged particle moving at v through
// the fluctuation field, one 3x3 block per requested lag:
//   C(lag) = int g(w) dw int dk (k x k) |phi_hat|^2
//              exp(i k.(w - v) lag) / |Delta(k, -i k.w)|^2.
// Needs a Maxwellian background; for sigma > 0 the mean must vanish, for
// sigma = 0 it must be collinear with v. The lag integral of C over the whole
// line equals the diffusion coefficient of the interacting medium.
std::vector<Mat3> force_correlation_fourier(const RadialPotential& profile,
                                            const VelocityDistribution& g,
                                            const Vec3& v,
                                            const std::vector<double>& lags,
                                            const ForceCorrelationOptions& opts = {});

// int_{-L}^{L} C(lag) dlag on an internally refined lag grid (dense near 0,
// coarse in the tail). Converges to the diffusion coefficient as L grows.
Mat3 force_correlation_lag_integral(const RadialPotential& profile,
                                    const VelocityDistribution& g,
                                    const Vec3& v, double L,
                                    const ForceCorrelationOptions& opts = {});

}  // namespace kinetic
