#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kinetic/errors.hpp"
#include "kinetic/forcefield.hpp"
#include "kinetic/quadrature.hpp"
#include "kinetic/stats.hpp"

using namespace kinetic;

namespace {

RadialPotential cored_yukawa() { return RadialPotential::yukawa(1.0, 1.0, 0.5); }

VelocityDistribution unit_maxwellian() {
  return VelocityDistribution::maxwellian(1.0, Vec3::Zero(), 1.0);
}

}  // namespace

TEST_CASE("gradient correlation matches independent radial anchors") {
  // Independent 2D-quadrature values of m_par, m_perp for the cored yukawa.
  auto gc = GradientCorrelation::cached(cored_yukawa(), 64.0);
  struct Anchor {
    double r, par, perp;
  };
  const Anchor table[] = {
      {0.5, 0.789277, 4.163692},
      {1.0, -1.206748, 1.667736},
      {2.0, -0.683781, 0.375202},
      {4.0, -0.107755, 0.027361},
  };
  for (const auto& a : table) {
    CHECK(gc->m_par(a.r) == doctest::Approx(a.par).epsilon(2e-3));
    CHECK(gc->m_perp(a.r) == doctest::Approx(a.perp).epsilon(2e-3));
  }
}

TEST_CASE("gradient correlation trace at zero is the gradient energy") {
  auto profile = cored_yukawa();
  auto gc = GradientCorrelation::cached(profile, 64.0);
  // Dual route: 4 pi int s^2 Phi'(s)^2 ds computed here directly.
  double energy =
      4.0 * M_PI *
      adaptive_simpson(
          [&](double s) {
            double d = profile.derivative(s);
            return s * s * d * d;
          },
          0.0, 60.0, 1e-10);
  Mat3 at0 = gc->eval(Vec3::Zero());
  CHECK(at0.trace() == doctest::Approx(energy).epsilon(1e-4));
  CHECK(at0(0, 0) == doctest::Approx(energy / 3.0).epsilon(1e-4));
  CHECK(std::abs(at0(0, 1)) < 1e-10 * energy);
}

TEST_CASE("gradient correlation decomposes along the separation") {
  auto gc = GradientCorrelation::cached(cored_yukawa(), 64.0);
  Vec3 a(0.6, -0.8, 1.1);
  double r = a.norm();
  Mat3 M = gc->eval(a);
  Vec3 ah = a / r;
  double par = ah.dot(M * ah);
  CHECK(par == doctest::Approx(gc->m_par(r)).epsilon(1e-10));
  Vec3 perp = Vec3(1.1, 0.6, 0).normalized();
  Vec3 ph = (perp - perp.dot(ah) * ah).normalized();
  CHECK(ph.dot(M * ph) == doctest::Approx(gc->m_perp(r)).epsilon(1e-10));
}

TEST_CASE("lag integrals concentrate in the transverse part") {
  auto gc = GradientCorrelation::cached(cored_yukawa(), 64.0);
  // Plancherel route: int_0^inf m_perp dr = pi^2/2 int rho^3 |Phi_hat|^2.
  CHECK(gc->perp_integral() == doctest::Approx(5.371250).epsilon(1e-3));
  CHECK(std::abs(gc->par_integral()) < 1e-3 * gc->perp_integral());
  CHECK(gc->integrable_tail());
}

TEST_CASE("gaussian profile closed forms for the lag integrals") {
  // Phi_hat = e^{-k^2/2}: int rho^3 Phi_hat^2 = 1/2, gradient energy =
  // (3/2) pi^{3/2}.
  auto gc = GradientCorrelation::cached(RadialPotential::gaussian(1.0, 1.0),
                                        48.0);
  CHECK(gc->perp_integral() ==
        doctest::Approx(M_PI * M_PI / 2.0).epsilon(1e-4));
  CHECK(std::abs(gc->par_integral()) < 1e-4);
  CHECK(gc->eval(Vec3::Zero()).trace() ==
        doctest::Approx(1.5 * std::pow(M_PI, 1.5)).epsilon(1e-6));
}

TEST_CASE("diffusion kernel agrees with shell anchors and the lag route") {
  auto profile = cored_yukawa();
  auto g = unit_maxwellian();
  Vec3 V(1, 0, 0);
  KernelDiffusion kd = kernel_diffusion(profile, g, V);
  // Exact values from the resonant-plane form for this profile.
  CHECK(kd.D(0, 0) == doctest::Approx(4.269577).epsilon(1e-3));
  CHECK(kd.D(1, 1) == doctest::Approx(5.198102).epsilon(1e-3));
  CHECK(kd.D(2, 2) == doctest::Approx(5.198102).epsilon(1e-3));
  CHECK(std::abs(kd.D(0, 1)) < 1e-6 * kd.D.trace());
  CHECK(kd.quad_error < 1e-3 * kd.D.trace());
  CHECK(kd.skipped_measure == 0.0);

  // Direct trapezoid over the lag variable, two-sided by symmetry.
  double h = 0.05;
  Mat3 acc = 0.5 * h * 2.0 * kernel_K(profile, g, V, 0.0);
  for (int i = 1; i <= 800; ++i)
    acc += h * 2.0 * kernel_K(profile, g, V, h * i, 12);
  CHECK(acc.trace() == doctest::Approx(kd.D.trace()).epsilon(1e-3));
}

TEST_CASE("diffusion kernel is rotationally equivariant") {
  auto profile = cored_yukawa();
  auto g = unit_maxwellian();
  Mat3 Q = Eigen::AngleAxisd(0.9, Vec3(1, 2, 2).normalized()).toRotationMatrix();
  Vec3 v(0.8, -0.2, 0.4);
  Mat3 D = kernel_diffusion(profile, g, v, 14).D;
  Mat3 DQ = kernel_diffusion(profile, g, Q * v, 14).D;
  CHECK((DQ - Q * D * Q.transpose()).norm() < 1e-4 * D.norm());
}

TEST_CASE("force kernel at zero lag is the isotropic gradient energy") {
  auto profile = cored_yukawa();
  auto g = unit_maxwellian();
  Mat3 K0 = kernel_K(profile, g, Vec3(0.3, 0, 0), 0.0);
  CHECK(K0.trace() == doctest::Approx(20.438490).epsilon(1e-3));
  CHECK(K0(0, 0) == doctest::Approx(K0.trace() / 3.0).epsilon(1e-6));
  // Even in the lag for a centered background.
  Mat3 Kp = kernel_K(profile, g, Vec3(1, 0, 0), 0.7);
  Mat3 Km = kernel_K(profile, g, Vec3(1, 0, 0), -0.7);
  CHECK((Kp - Km).norm() < 1e-10 * Kp.norm());
  // Decays with lag.
  CHECK(kernel_K(profile, g, Vec3(1, 0, 0), 3.0).trace() < 0.2 * K0.trace());
}

TEST_CASE("coulomb decay is rejected by the lag integral") {
  auto g = unit_maxwellian();
  CHECK_THROWS_AS(
      kernel_diffusion(RadialPotential::coulomb_reg(1.0, 0.5), g, Vec3(1, 0, 0)),
      NonIntegrableKernel);
}

TEST_CASE("force truncation covers the flowed window or refuses") {
  SpeciesSet set;
  set.species.push_back({1.0, unit_maxwellian()});
  auto cfg = sample_poisson(set, 12.0, 5);
  auto pot = ScaledPotential::boltzmann(cored_yukawa(), 1.0);
  auto f = force_at(cfg, set, pot, Vec3(0.5, 0, 0), 0.0, 6.0);
  CHECK(f.truncation_radius == 6.0);
  CHECK(f.n_particles_used > 0);
  CHECK(f.n_particles_used < cfg.total_count());
  CHECK(std::isfinite(f.value.norm()));
  // tau * v_cut pushes the needed ball past R: refused.
  CHECK_THROWS_AS(force_at(cfg, set, pot, Vec3::Zero(), 2.0, 11.5),
                  SupportEscapesBall);
}

TEST_CASE("dyadic shells sum to the truncated force at zero lag") {
  SpeciesSet set;
  set.species.push_back({1.0, unit_maxwellian()});
  auto cfg = sample_poisson(set, 10.0, 9);
  auto pot = ScaledPotential::boltzmann(cored_yukawa(), 1.0);
  auto shells = dyadic_shells(cfg, pot, Vec3(0.2, -0.1, 0), 0.0, 4);
  REQUIRE(!shells.empty());
  Vec3 sum = Vec3::Zero();
  std::size_t count = 0;
  for (const auto& sh : shells) {
    sum += sh.f;
    count += sh.count;
  }
  double top = std::pow(2.0, shells.back().j);
  auto direct = force_at(cfg, set, pot, Vec3(0.2, -0.1, 0), 0.0, top);
  CHECK((sum - direct.value).norm() < 1e-12 * (1.0 + direct.value.norm()));
  // Far shells contribute little for a short-range profile.
  CHECK(shells.back().f.norm() < shells.front().f.norm());
  CHECK(count > 0);
}

TEST_CASE("deflections are deterministic and worker independent") {
  SpeciesSet set;
  set.species.push_back({1.0, unit_maxwellian()});
  auto pot = ScaledPotential::landau(cored_yukawa(), 0.3, 1.0);
  DeflectionOptions o1, o3;
  o1.workers = 1;
  o3.workers = 3;
  auto a = deflection_mc(set, pot, Vec3(1, 0, 0), 4.0, 40, 21, o1);
  auto b = deflection_mc(set, pot, Vec3(1, 0, 0), 4.0, 40, 21, o3);
  REQUIRE(a.n_samples == 40);
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    CHECK((a.samples[i] - b.samples[i]).norm() == 0.0);
  CHECK((a.covariance - b.covariance).norm() == 0.0);
}

TEST_CASE("windowed and dense integrations agree per configuration") {
  SpeciesSet set;
  set.species.push_back({1.0, unit_maxwellian()});
  auto pot = ScaledPotential::landau(cored_yukawa(), 0.3, 1.0);
  Vec3 V(1, 0, 0);
  double horizon = 3.0;
  // Ball large enough that the dense pass sees every relevant scatterer.
  auto cfg = sample_poisson(set, 18.0, 77);
  Vec3 dense = deflection_of_config(cfg, pot, V, horizon, 1e-3, false);
  Vec3 windowed = deflection_of_config(cfg, pot, V, horizon, 1e-3, true, 10.0);
  CHECK((dense - windowed).norm() < 2e-3 * (1.0 + dense.norm()));
}

TEST_CASE("mean deflection vanishes by symmetry for a resting tag") {
  SpeciesSet set;
  set.species.push_back({1.0, unit_maxwellian()});
  auto pot = ScaledPotential::landau(cored_yukawa(), 0.2, 1.0);
  auto ens = deflection_mc(set, pot, Vec3::Zero(), 2.0, 200, 13);
  double scale = std::sqrt(ens.covariance.trace() / ens.n_samples);
  CHECK(ens.mean.norm() < 5.0 * scale);
}
