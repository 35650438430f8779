#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kinetic/errors.hpp"
#include "kinetic/pointprocess.hpp"
#include "kinetic/stats.hpp"

using namespace kinetic;

namespace {

SpeciesSet one_species(double density = 1.0, double T = 1.0) {
  SpeciesSet set;
  set.species.push_back(
      {1.0, VelocityDistribution::maxwellian(density, Vec3::Zero(), T)});
  return set;
}

}  // namespace

TEST_CASE("sampling is deterministic per seed") {
  auto set = one_species();
  auto a = sample_poisson(set, 8.0, 42);
  auto b = sample_poisson(set, 8.0, 42);
  auto c = sample_poisson(set, 8.0, 43);
  REQUIRE(a.species.size() == 1);
  REQUIRE(a.species[0].x.size() == b.species[0].x.size());
  for (std::size_t i = 0; i < a.species[0].x.size(); ++i) {
    CHECK(a.species[0].x[i] == b.species[0].x[i]);
    CHECK(a.species[0].v[i] == b.species[0].v[i]);
  }
  CHECK(a.total_count() > 0);
  CHECK((c.species[0].x.size() != a.species[0].x.size() ||
         c.species[0].x[0] != a.species[0].x[0]));
}

TEST_CASE("counts match the poisson intensity") {
  auto set = one_species(0.5);
  double R = 10.0;
  double lam = 0.5 * 4.0 / 3.0 * M_PI * R * R * R;
  RunningMoments m;
  for (std::uint64_t s = 0; s < 40; ++s)
    m.add((double)sample_poisson(set, R, 1000 + s).total_count());
  CHECK(std::abs(m.mean - lam) < 5.0 * std::sqrt(lam / 40.0));
  CHECK(std::abs(m.variance() / lam - 1.0) < 0.5);
}

TEST_CASE("positions are uniform in the ball") {
  auto set = one_species();
  auto cfg = sample_poisson(set, 6.0, 7);
  std::vector<double> radii_cubed;
  for (const Vec3& x : cfg.species[0].x) {
    REQUIRE(x.norm() <= 6.0 + 1e-12);
    radii_cubed.push_back(std::pow(x.norm() / 6.0, 3.0));
  }
  // |x|^3/R^3 is uniform on (0,1) for a uniform ball.
  CHECK(ks_test_pvalue(radii_cubed, [](double t) {
          return std::clamp(t, 0.0, 1.0);
        }) > 0.01);
}

TEST_CASE("velocities follow the species law") {
  SpeciesSet set;
  set.species.push_back(
      {1.0, VelocityDistribution::maxwellian(2.0, Vec3(1, 0, 0), 4.0)});
  auto cfg = sample_poisson(set, 5.0, 11);
  std::vector<double> comps;
  for (const Vec3& v : cfg.species[0].v) comps.push_back((v[0] - 1.0) / 2.0);
  CHECK(ks_test_pvalue(comps, [](double t) { return normal_cdf(t); }) > 0.01);
}

TEST_CASE("free flow transports positions and marks the radius stale") {
  auto set = one_species();
  auto cfg = sample_poisson(set, 4.0, 3);
  auto moved = free_flow(cfg, 0.75);
  CHECK(moved.radius_stale);
  CHECK(!cfg.radius_stale);
  for (std::size_t i = 0; i < cfg.species[0].x.size(); ++i) {
    Vec3 expect = cfg.species[0].x[i] + 0.75 * cfg.species[0].v[i];
    CHECK((moved.species[0].x[i] - expect).norm() == 0.0);
    CHECK(moved.species[0].v[i] == cfg.species[0].v[i]);
  }
}

TEST_CASE("dump and load round-trip bit-exactly") {
  SpeciesSet set;
  set.species.push_back(
      {+1.0, VelocityDistribution::maxwellian(0.8, Vec3::Zero(), 1.0)});
  set.species.push_back(
      {-1.0, VelocityDistribution::maxwellian(0.8, Vec3(0, 0, 2), 0.5)});
  auto cfg = sample_poisson(set, 5.0, 99);
  std::stringstream ss;
  dump_particles(cfg, ss);
  auto back = load_particles(ss);
  REQUIRE(back.species.size() == cfg.species.size());
  for (std::size_t s = 0; s < cfg.species.size(); ++s) {
    CHECK(back.species[s].charge == cfg.species[s].charge);
    REQUIRE(back.species[s].x.size() == cfg.species[s].x.size());
    for (std::size_t i = 0; i < cfg.species[s].x.size(); ++i) {
      CHECK((back.species[s].x[i] - cfg.species[s].x[i]).norm() == 0.0);
      CHECK((back.species[s].v[i] - cfg.species[s].v[i]).norm() == 0.0);
    }
  }
}

TEST_CASE("oversized expected counts are refused") {
  auto set = one_species(1e6);
  CHECK_THROWS_AS(sample_poisson(set, 1e3, 1), OverflowingCount);
}

TEST_CASE("pair moment identity holds for separable test functions") {
  // For the rescaled empirical measure, Var<f, phi> = L^-3 int g(w) phi^2.
  auto set = one_species();
  double L = 4.0;
  auto phi = [](const Vec3& y, const Vec3& w) {
    double ry = y.squaredNorm(), rw = w.squaredNorm();
    return (ry < 1.0 ? (1.0 - ry) : 0.0) * std::exp(-0.5 * rw);
  };
  auto m = empirical_pair_moment(set, L, phi, 1.0, 4000, 12345);

  // int_{|y|<1} (1-|y|^2)^2 dy = 4 pi int_0^1 r^2(1-r^2)^2 dr = 32 pi / 105.
  double Iy = 32.0 * M_PI / 105.0;
  double Iy1 = 4.0 * M_PI * (1.0 / 3.0 - 1.0 / 5.0);  // int (1-r^2) over ball
  // int g e^{-|w|^2} dw for a unit Maxwellian = (2 sqrt(pi))^{-3} * ... :
  // (2pi)^{-3/2} int e^{-|w|^2(1/2 + 1)} ... with exp(-0.5|w|^2) squared.
  double Iw2 = std::pow(2.0 * M_PI, -1.5) *
               std::pow(M_PI / (0.5 + 1.0), 1.5);  // int g * e^{-|w|^2}
  double mean_expect = Iy1 * std::pow(2.0 * M_PI, -1.5) *
                       std::pow(M_PI / (0.5 + 0.5), 1.5);  // int g e^{-|w|^2/2}
  double var_expect = std::pow(L, -3.0) * Iy * Iw2;

  CHECK(std::abs(m.mean_first - mean_expect) < 4.0 * m.std_error_first);
  double var = m.mean_second - m.mean_first * m.mean_first;
  // Delta-method error bar on the centered second moment.
  double err = m.std_error_second +
               2.0 * std::abs(m.mean_first) * m.std_error_first;
  CHECK(std::abs(var - var_expect) < 4.0 * err);
}
