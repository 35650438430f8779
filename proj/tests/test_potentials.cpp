#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kinetic/errors.hpp"
#include "kinetic/potentials.hpp"

using namespace kinetic;

TEST_CASE("smoothstep cutoff is a flat-ended ramp") {
  CHECK(smoothstep_cutoff(0.3) == 1.0);
  CHECK(smoothstep_cutoff(1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(smoothstep_cutoff(2.0) == doctest::Approx(0.0).scale(1).epsilon(1e-14));
  CHECK(smoothstep_cutoff(2.7) == 0.0);
  CHECK(smoothstep_cutoff_derivative(1.0) ==
        doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(smoothstep_cutoff_derivative(2.0) ==
        doctest::Approx(0.0).scale(1).epsilon(1e-12));
  double prev = 1.0;
  for (double x = 1.05; x < 2.0; x += 0.05) {
    double v = smoothstep_cutoff(x);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("bare yukawa transform matches the closed form") {
  auto phi = RadialPotential::yukawa(1.0, 1.0, 0.0);
  for (double k : {0.3, 1.0, 5.0}) {
    double expect = std::sqrt(2.0 / M_PI) / (1.0 + k * k);
    CHECK(phi.fourier(k) == doctest::Approx(expect).epsilon(1e-9));
  }
  auto phi2 = RadialPotential::yukawa(2.0, 1.5, 0.0);
  double k = 0.8;
  double expect = 2.0 * std::sqrt(2.0 / M_PI) / (k * k + 1.0 / (1.5 * 1.5));
  CHECK(phi2.fourier(k) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("gaussian profile is self-dual under the transform") {
  auto phi = RadialPotential::gaussian(1.0, 1.0);
  for (double k : {0.0, 0.7, 2.0})
    CHECK(phi.fourier(k) ==
          doctest::Approx(std::exp(-0.5 * k * k)).epsilon(1e-9));
  auto phi2 = RadialPotential::gaussian(2.0, 1.7);
  double w = 1.7, k = 1.1;
  CHECK(phi2.fourier(k) ==
        doctest::Approx(2.0 * w * w * w * std::exp(-0.5 * k * k * w * w))
            .epsilon(1e-9));
}

TEST_CASE("cored yukawa transform regression values") {
  // Independent quadrature anchors for the cap-blended profile.
  auto phi = RadialPotential::yukawa(1.0, 1.0, 0.5);
  CHECK(phi.fourier(1.0) == doctest::Approx(3.704883394766e-01).epsilon(1e-8));
  CHECK(phi.fourier(5.0) == doctest::Approx(1.913716212873e-02).epsilon(1e-8));
}

TEST_CASE("coulomb transform diverges at zero and is coulomb at long waves") {
  auto phi = RadialPotential::coulomb_reg(1.0, 1.0);
  CHECK(phi.decay() == RadialPotential::Decay::coulomb_like);
  CHECK_THROWS_AS(phi.fourier(0.0), DivergentTransform);
  double k = 0.05;
  CHECK(phi.fourier(k) ==
        doctest::Approx(std::sqrt(2.0 / M_PI) / (k * k)).epsilon(0.01));
}

TEST_CASE("core regularization caps the origin and leaves the far field") {
  auto phi = RadialPotential::yukawa(1.0, 1.0, 0.5);
  CHECK(phi.smooth_at_origin());
  CHECK(phi.value(0.0) == doctest::Approx(3.0).epsilon(1e-14));
  // The cap is flat at zero, so the slope there is pure screening decay.
  CHECK(phi.derivative(0.0) == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(std::isfinite(phi.value(1e-300)));
  CHECK(std::isfinite(phi.derivative(1e-300)));
  // Beyond twice the core the profile is exactly the bare one.
  for (double s : {1.01, 1.5, 4.0})
    CHECK(phi.value(s) == doctest::Approx(std::exp(-s) / s).epsilon(1e-14));
  // C^1 across both blend edges.
  for (double edge : {0.5, 1.0}) {
    CHECK(phi.value(edge - 1e-9) ==
          doctest::Approx(phi.value(edge + 1e-9)).epsilon(1e-7));
    CHECK(phi.derivative(edge - 1e-9) ==
          doctest::Approx(phi.derivative(edge + 1e-9)).epsilon(1e-6));
  }
}

TEST_CASE("bare coulomb keeps its singularity metadata") {
  auto phi = RadialPotential::coulomb_reg(2.0, 0.5);
  CHECK(phi.coulomb_amplitude() == 2.0);
  CHECK(phi.core_radius() == 0.5);
  for (double s : {1.01, 3.0}) CHECK(phi.value(s) == doctest::Approx(2.0 / s));
  auto bare = RadialPotential::yukawa(1.0, 1.0, 0.0);
  CHECK(!bare.smooth_at_origin());
  CHECK(bare.value(1e-4) > 1e3);
}

TEST_CASE("support radii shrink with looser tolerances") {
  auto phi = RadialPotential::yukawa(1.0, 1.0, 0.5);
  CHECK(phi.gradient_support_radius(1e-1) < phi.gradient_support_radius(1e-6));
  CHECK(phi.range(1e-2) < phi.range(1e-8));
  auto wide = RadialPotential::yukawa(1.0, 3.0, 0.5);
  CHECK(wide.range(1e-6) > phi.range(1e-6));
}

TEST_CASE("tabulated profile tracks its source and transform") {
  auto src = RadialPotential::yukawa(1.0, 1.0, 0.5);
  std::vector<double> s, v;
  for (double x = 0.0; x <= 20.0; x += 0.01) {
    s.push_back(x);
    v.push_back(src.value(x));
  }
  auto tab = RadialPotential::tabulated(std::move(s), std::move(v),
                                        RadialPotential::Decay::fast);
  for (double x : {0.3, 1.2, 5.0})
    CHECK(tab.value(x) == doctest::Approx(src.value(x)).epsilon(1e-6));
  CHECK(tab.fourier(1.0) == doctest::Approx(src.fourier(1.0)).epsilon(1e-4));
}

TEST_CASE("cache keys separate distinct profiles") {
  auto a = RadialPotential::yukawa(1.0, 1.0, 0.5);
  auto b = RadialPotential::yukawa(1.0, 1.0, 0.25);
  auto c = RadialPotential::gaussian(1.0, 1.0);
  auto a2 = RadialPotential::yukawa(1.0, 1.0, 0.5);
  CHECK(a.cache_key() == a2.cache_key());
  CHECK(a.cache_key() != b.cache_key());
  CHECK(a.cache_key() != c.cache_key());
}

TEST_CASE("scaling families pin amplitude and length") {
  auto base = RadialPotential::yukawa(1.0, 1.0, 0.5);
  auto cb = RadialPotential::coulomb_reg(1.0, 0.5);

  auto bz = ScaledPotential::boltzmann(base, 0.1);
  CHECK(bz.amplitude() == 1.0);
  CHECK(bz.length_scale() == 0.1);

  auto ld = ScaledPotential::landau(base, 0.1, 2.0);
  CHECK(ld.amplitude() == 0.1);
  CHECK(ld.length_scale() == 2.0);

  auto gz = ScaledPotential::grazing(base, 0.2, 1.5);
  CHECK(gz.amplitude() == 0.2);
  CHECK(gz.length_scale() == 1.5);

  auto cs = ScaledPotential::coulomb_short(cb, 0.05);
  CHECK(cs.amplitude() == 1.0);
  CHECK(cs.length_scale() == 0.05);

  auto cw = ScaledPotential::coulomb_weak(cb, 0.05);
  CHECK(cw.amplitude() == 0.05);
  CHECK(cw.length_scale() == 1.0);

  // Pointwise consistency of the scaled evaluation with its base.
  double r = 0.73;
  CHECK(ld.value(r) ==
        doctest::Approx(0.1 * base.value(r / 2.0)).epsilon(1e-14));
  Vec3 x(0.4, -0.3, 0.2);
  auto [val, grad] = ld.evaluate(x);
  CHECK(val == doctest::Approx(ld.value(x.norm())).epsilon(1e-14));
  double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    double fd = (ld.value((x + e).norm()) - ld.value((x - e).norm())) / (2 * h);
    CHECK(grad[a] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("coulomb families reject non-coulomb bases") {
  auto base = RadialPotential::yukawa(1.0, 1.0, 0.5);
  CHECK_THROWS_AS(ScaledPotential::coulomb_short(base, 0.1), ConfigError);
  CHECK_THROWS_AS(ScaledPotential::coulomb_weak(base, 0.1), ConfigError);
  CHECK_THROWS_AS(ScaledPotential::boltzmann(base, 0.0), ConfigError);
}

TEST_CASE("singular origin evaluation throws only for singular cores") {
  auto singular = ScaledPotential::boltzmann(
      RadialPotential::yukawa(1.0, 1.0, 0.0), 1.0);
  CHECK_THROWS_AS(singular.evaluate(Vec3::Zero()), SingularOrigin);
  auto capped = ScaledPotential::boltzmann(
      RadialPotential::yukawa(1.0, 1.0, 0.5), 1.0);
  auto [v0, g0] = capped.evaluate(Vec3::Zero());
  CHECK(v0 == doctest::Approx(3.0));
  CHECK(g0.norm() == 0.0);
}

TEST_CASE("split potential partitions the whole interaction") {
  auto phi = ScaledPotential::landau(RadialPotential::yukawa(1.0, 1.0, 0.5),
                                     0.5, 1.0);
  SplitPotential split(phi, 2.0, 0.7);
  CHECK(split.split_radius() == doctest::Approx(1.4));
  for (double r : {0.2, 1.0, 1.4, 2.0, 3.5, 6.0}) {
    double whole = phi.value(r);
    CHECK(split.boltzmann_part(r) + split.landau_part(r) ==
          doctest::Approx(whole).epsilon(1e-12));
  }
  // Short part vanishes beyond twice the split radius, long part below it.
  CHECK(split.boltzmann_part(2.9) == 0.0);
  CHECK(split.landau_part(1.3) == 0.0);
  Vec3 x(0.5, 0.2, -0.1);
  Vec3 sum = split.boltzmann_gradient(x) + split.landau_gradient(x);
  CHECK((sum - phi.gradient(x)).norm() < 1e-12);
}
