#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "kinetic/dielectric.hpp"
#include "kinetic/errors.hpp"
#include "kinetic/quadrature.hpp"
#include "kinetic/stats.hpp"

using namespace kinetic;

namespace {

VelocityDistribution unit_maxwellian() {
  return VelocityDistribution::maxwellian(1.0, Vec3::Zero(), 1.0);
}

// Two symmetric Maxwellian beams at +-u e1, tabulated on a cube.
VelocityDistribution two_stream(double u, double T) {
  auto lump_p = VelocityDistribution::maxwellian(0.5, Vec3(u, 0, 0), T);
  auto lump_m = VelocityDistribution::maxwellian(0.5, Vec3(-u, 0, 0), T);
  double half = u + 8.0 * std::sqrt(T);
  int n = 49;
  VelocityGrid grid;
  grid.lo = -half * Vec3::Ones();
  grid.h = 2.0 * half / (n - 1);
  grid.n = {n, n, n};
  std::vector<double> vals;
  vals.reserve((std::size_t)n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        Vec3 w = grid.lo + grid.h * Vec3(i, j, k);
        vals.push_back(lump_p.value(w) + lump_m.value(w));
      }
  return VelocityDistribution::tabulated(grid, std::move(vals));
}

}  // namespace

TEST_CASE("cauchy-weighted hermite integral matches direct quadrature") {
  // Pole well off the axis: compare against a plain real-line quadrature.
  Cplx alpha(0.7, 1.3);
  Cplx direct = adaptive_simpson(
      [&](double t) { return std::exp(-t * t) / (t - alpha); }, -9.0, 9.0,
      1e-12);
  Cplx viagh = gauss_hermite_cauchy(alpha, +1);
  CHECK(std::abs(viagh - direct) < 1e-9);
  // Conjugation symmetry with the pole side flipped.
  Cplx conj = gauss_hermite_cauchy(std::conj(alpha), -1);
  CHECK(std::abs(conj - std::conj(viagh)) < 1e-12);
}

TEST_CASE("dispersion integral hits the frozen maxwellian value") {
  DispersionFunction psi(unit_maxwellian(), Vec3(1, 0, 0));
  Cplx at1 = psi(Cplx(1.0, 0.0));
  CHECK(at1.real() == doctest::Approx(-0.3443204575812012).epsilon(1e-9));
  CHECK(std::abs(at1.imag()) < 1e-12);
  CHECK(psi.strip_halfwidth() == doctest::Approx(2.0).epsilon(1e-12));
  // Direct quadrature route at a complex point inside the right half plane.
  Cplx zeta(0.8, 0.4);
  LineMarginal H = unit_maxwellian().line_marginal(Vec3(1, 0, 0));
  Cplx via = adaptive_simpson(
      [&](double s) { return H.derivative(s) / (Cplx(s, 0) - Cplx(0, 1) * zeta); },
      -9.0, 9.0, 1e-13);
  CHECK(std::abs(psi(zeta) - via) < 1e-9);
}

TEST_CASE("analytic continuation stops at the strip edge") {
  DispersionFunction psi(unit_maxwellian(), Vec3(0, 0, 1));
  CHECK_THROWS_AS(psi(Cplx(-2.5, 0.3)), OutsideAnalyticStrip);
}

TEST_CASE("static dielectric matches the closed form") {
  auto profile = RadialPotential::gaussian(1.0, 1.0);
  double sigma = 0.3;
  auto diel = DielectricFunction::medium(profile, sigma, unit_maxwellian());
  double k = 0.4;
  // Delta(k, 0+) = 1 + sigma (2 pi)^{3/2} PhiHat(k) n / T.
  double expect =
      1.0 + sigma * std::pow(2.0 * M_PI, 1.5) * profile.fourier(k) * 1.0;
  Cplx at0 = diel.delta(Vec3(0, 0, k), Cplx(1e-8, 0.0));
  CHECK(at0.real() == doctest::Approx(expect).epsilon(1e-6));
  CHECK(std::abs(at0.imag()) < 1e-8);
}

TEST_CASE("critical-line spline agrees with the direct dispersion route") {
  auto profile = RadialPotential::gaussian(1.0, 1.0);
  auto diel = DielectricFunction::medium(profile, 0.3, unit_maxwellian());
  Vec3 khat(0, 1, 0);
  double k = 0.8;
  for (double xi : {-1.7, -0.2, 0.6, 2.3}) {
    Cplx fast = diel.delta_critical(khat, k, xi);
    Cplx slow = diel.delta(
        k * khat, k * Cplx(DielectricFunction::kEtaCritical, -xi));
    CHECK(std::abs(fast - slow) < 1e-5 * std::abs(slow));
  }
}

TEST_CASE("tensor reduction cross-checks the scalar dielectric") {
  auto profile = RadialPotential::gaussian(1.0, 1.0);
  auto diel = DielectricFunction::medium(profile, 0.3, unit_maxwellian());
  Vec3 k(0, 0, 0.8);
  double omega = 0.9;
  DielectricTensor t = dielectric_tensor(diel, k, omega);
  // Frozen cross-route anchor.
  CHECK(t.delta_used.real() == doctest::Approx(1.5301463603).epsilon(1e-6));
  CHECK(t.delta_used.imag() == doctest::Approx(2.5692220246).epsilon(1e-6));
  // The longitudinal eigenvalue times 1/Delta is unity by construction;
  // transverse entries stay at the identity.
  Cplx par = t.eps(2, 2);
  CHECK(std::abs(par * (1.0 / t.delta_used) - Cplx(1, 0)) < 1e-10);
  CHECK(std::abs(t.eps(0, 0) - Cplx(1, 0)) < 1e-12);
  CHECK(std::abs(t.eps(0, 2)) < 1e-12);
  // Reality: negative frequency conjugates the response.
  DielectricTensor tm = dielectric_tensor(diel, k, -omega);
  CHECK(std::abs(tm.delta_used - std::conj(t.delta_used)) < 1e-9);
  // Spline route agrees with the plasma reduction on the critical line.
  Cplx spline_route = diel.delta_critical(Vec3(0, 0, 1), 0.8, omega / 0.8);
  CHECK(std::abs(spline_route - t.delta_used) < 1e-4 * std::abs(t.delta_used));
}

TEST_CASE("repulsive maxwellian medium is penrose stable") {
  auto diel = DielectricFunction::medium(RadialPotential::gaussian(1.0, 1.0),
                                         0.05, unit_maxwellian());
  for (double k : {0.3, 1.0, 2.5}) {
    StabilityReport rep = penrose_check(diel, Vec3(k, 0, 0));
    CHECK(rep.stable);
    CHECK(rep.winding == 0);
    CHECK(rep.min_abs_delta > 0.0);
  }
}

TEST_CASE("strong coupling drives the two-stream medium unstable") {
  auto g = two_stream(3.0, 0.2);
  auto diel =
      DielectricFunction::medium(RadialPotential::gaussian(1.0, 1.0), 5.0, g);
  StabilityReport rep = penrose_check(diel, Vec3(0.2, 0, 0));
  CHECK(!rep.stable);
  CHECK(rep.winding != 0);
  // The same medium at weak coupling is stable again.
  auto weak =
      DielectricFunction::medium(RadialPotential::gaussian(1.0, 1.0), 0.01, g);
  CHECK(penrose_check(weak, Vec3(0.2, 0, 0)).stable);
}

TEST_CASE("fundamental solution conserves mass and damps the interaction") {
  auto diel = DielectricFunction::medium(RadialPotential::gaussian(1.0, 1.0),
                                         0.05, unit_maxwellian());
  XiTimeOptions opts;
  opts.nx = 256;
  opts.k_max = 8.0;
  opts.nk = 128;
  opts.n_omega_min = 2048;
  std::vector<double> times{0.5, 1.0, 2.0, 4.0};
  auto grid = xi_time(diel, Vec3(1, 0, 0), 0.7, times, opts);
  REQUIRE(grid.t.size() == times.size());
  REQUIRE(grid.values.size() == times.size());
  CHECK(grid.w0 == 0.7);
  CHECK(grid.a_check_gap < 1e-3);
  for (double m : grid.mass) CHECK(m == doctest::Approx(1.0).epsilon(0.02));
  // The interaction part relaxes: late sup is below the early sup.
  CHECK(grid.sup_interaction.back() < grid.sup_interaction.front());
  // Envelope rate of the interaction tail is positive (stable medium).
  std::vector<double> lt, le;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (grid.sup_interaction[i] > 0) {
      lt.push_back(times[i]);
      le.push_back(std::log(grid.sup_interaction[i]));
    }
  REQUIRE(lt.size() >= 3);
  LinearFit fit = linear_fit(lt, le);
  CHECK(fit.slope < 0.0);
}

TEST_CASE("unstable media are refused by the time inversion") {
  auto g = two_stream(3.0, 0.2);
  auto diel =
      DielectricFunction::medium(RadialPotential::gaussian(1.0, 1.0), 5.0, g);
  XiTimeOptions opts;
  opts.nx = 64;
  opts.k_max = 2.0;
  opts.nk = 32;
  opts.n_omega_min = 512;
  CHECK_THROWS_AS(xi_time(diel, Vec3(1, 0, 0), 0.5, {0.5, 1.0}, opts),
                  UnstableMedium);
}
