#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "kinetic/distributions.hpp"
#include "kinetic/errors.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/stats.hpp"

using namespace kinetic;

namespace {

VelocityDistribution unit_maxwellian() {
  return VelocityDistribution::maxwellian(1.0, Vec3::Zero(), 1.0);
}

VelocityDistribution tabulated_from_maxwellian(double density, const Vec3& mean,
                                               double T, double half_width,
                                               int n) {
  auto mx = VelocityDistribution::maxwellian(density, mean, T);
  VelocityGrid grid;
  grid.lo = mean - half_width * Vec3::Ones();
  grid.h = 2.0 * half_width / (n - 1);
  grid.n = {n, n, n};
  std::vector<double> vals;
  vals.reserve((std::size_t)n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        vals.push_back(mx.value(grid.lo + grid.h * Vec3(i, j, k)));
  return VelocityDistribution::tabulated(grid, std::move(vals));
}

}  // namespace

TEST_CASE("maxwellian peak value and parameters round-trip") {
  auto g = VelocityDistribution::maxwellian(2.0, Vec3(0.5, -1, 0), 1.7);
  CHECK(g.kind() == VelocityDistribution::Kind::maxwellian);
  CHECK(g.density() == 2.0);
  CHECK(g.temperature() == 1.7);
  CHECK(g.mean() == Vec3(0.5, -1, 0));
  double peak = 2.0 * std::pow(2.0 * M_PI * 1.7, -1.5);
  CHECK(g.value(Vec3(0.5, -1, 0)) == doctest::Approx(peak).epsilon(1e-14));
}

TEST_CASE("maxwellian gradient matches finite differences") {
  auto g = VelocityDistribution::maxwellian(1.3, Vec3(0.2, 0, -0.4), 0.8);
  Vec3 w(0.9, -0.3, 0.1);
  Vec3 grad = g.gradient(w);
  double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    double fd = (g.value(w + e) - g.value(w - e)) / (2 * h);
    CHECK(grad[a] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("maxwellian samples pass a KS test per component") {
  auto g = VelocityDistribution::maxwellian(1.0, Vec3(2, 0, 0), 4.0);
  Substream rng(77, 0);
  std::vector<double> xs, ys;
  for (int i = 0; i < 8000; ++i) {
    Vec3 w = g.sample(rng);
    xs.push_back((w[0] - 2.0) / 2.0);
    ys.push_back(w[1] / 2.0);
  }
  CHECK(ks_test_pvalue(xs, [](double t) { return normal_cdf(t); }) > 0.01);
  CHECK(ks_test_pvalue(ys, [](double t) { return normal_cdf(t); }) > 0.01);
}

TEST_CASE("speed percentile inverts the chi3 law") {
  auto g = unit_maxwellian();
  for (double q : {0.1, 0.5, 0.9, 0.99}) {
    double r = g.speed_percentile(q);
    // P(|w| <= r) for a unit Maxwellian is the regularized gamma P(3/2, r^2/2).
    CHECK(gamma_p(1.5, 0.5 * r * r) == doctest::Approx(q).epsilon(1e-6));
  }
  CHECK(g.speed_percentile(0.9) >
        VelocityDistribution::maxwellian(1, Vec3::Zero(), 0.25)
            .speed_percentile(0.9));
}

TEST_CASE("support radius covers the mass seen from a shifted point") {
  auto g = VelocityDistribution::maxwellian(1.0, Vec3(3, 0, 0), 2.0);
  Vec3 v(-1, 2, 0);
  double R = g.support_radius_about(v);
  CHECK(R > (g.mean() - v).norm());
  // Density outside the ball is negligible at the quadrature scale.
  double r99 = g.speed_percentile(0.999999);
  CHECK(R > (g.mean() - v).norm() + r99 - 1e-9);
}

TEST_CASE("line marginal of a maxwellian is the 1d gaussian") {
  auto g = VelocityDistribution::maxwellian(1.5, Vec3(1, 1, 0), 0.6);
  Vec3 theta = Vec3(1, 2, 2).normalized();
  LineMarginal m = g.line_marginal(theta);
  CHECK(m.analytic);
  double mu = theta.dot(Vec3(1, 1, 0));
  for (double s : {mu, mu + 0.7, mu - 1.9}) {
    double expect = 1.5 / std::sqrt(2 * M_PI * 0.6) *
                    std::exp(-(s - mu) * (s - mu) / (2 * 0.6));
    CHECK(m(s) == doctest::Approx(expect).epsilon(1e-12));
    double h = 1e-6;
    CHECK(m.derivative(s) ==
          doctest::Approx((m(s + h) - m(s - h)) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("tabulated distribution reproduces its source") {
  auto tab = tabulated_from_maxwellian(1.0, Vec3::Zero(), 1.0, 6.0, 41);
  auto mx = unit_maxwellian();
  CHECK(tab.kind() == VelocityDistribution::Kind::tabulated);
  CHECK(tab.density() == doctest::Approx(1.0).epsilon(2e-3));
  CHECK(tab.temperature() == doctest::Approx(1.0).epsilon(2e-2));
  CHECK(tab.mean().norm() < 1e-10);
  for (Vec3 w : {Vec3(0.25, 0, 0), Vec3(1.1, -0.6, 0.3)})
    CHECK(tab.value(w) == doctest::Approx(mx.value(w)).epsilon(2e-2));
  // Off-domain evaluation is a contract violation, not a silent zero; the
  // membership test is what quadratures consult first.
  CHECK(tab.contains(Vec3(5.9, 0, 0)));
  CHECK(!tab.contains(Vec3(7, 0, 0)));
  CHECK(mx.contains(Vec3(1e6, 0, 0)));
  CHECK_THROWS_AS(tab.value(Vec3(7, 0, 0)), OutOfGrid);
  CHECK_THROWS_AS(tab.gradient(Vec3(0, 6.5, 0)), OutOfGrid);
}

TEST_CASE("tabulated line marginal approximates the analytic one") {
  auto tab = tabulated_from_maxwellian(1.0, Vec3::Zero(), 1.0, 6.0, 41);
  LineMarginal m = tab.line_marginal(Vec3(0, 0, 1));
  CHECK(!m.analytic);
  double expect = 1.0 / std::sqrt(2 * M_PI);
  CHECK(m(0.0) == doctest::Approx(expect).epsilon(5e-3));
  CHECK(m(1.0) == doctest::Approx(expect * std::exp(-0.5)).epsilon(5e-3));
}

TEST_CASE("tabulated samples follow the tabulated law") {
  auto tab = tabulated_from_maxwellian(1.0, Vec3::Zero(), 1.0, 6.0, 25);
  Substream rng(5, 1);
  std::vector<double> xs;
  for (int i = 0; i < 4000; ++i) xs.push_back(tab.sample(rng)[0]);
  CHECK(ks_test_pvalue(xs, [](double t) { return normal_cdf(t); }) > 0.005);
}

TEST_CASE("tabulated file round-trip preserves node values") {
  auto tab = tabulated_from_maxwellian(2.0, Vec3(0.5, 0, 0), 1.3, 5.0, 17);
  std::string path = "/tmp/kinetic_test_dist.bin";
  {
    // Write using the documented little-endian layout via the library itself.
    FILE* f = fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    const VelocityGrid& gr = tab.grid();
    std::uint64_t dims[3] = {(std::uint64_t)gr.n[0], (std::uint64_t)gr.n[1],
                             (std::uint64_t)gr.n[2]};
    fwrite(dims, sizeof dims, 1, f);
    double box[6] = {gr.lo[0], gr.lo[1], gr.lo[2],
                     gr.hi()[0], gr.hi()[1], gr.hi()[2]};
    fwrite(box, sizeof box, 1, f);
    fwrite(tab.values().data(), sizeof(double), tab.values().size(), f);
    fclose(f);
  }
  auto back = VelocityDistribution::tabulated_from_file(path);
  REQUIRE(back.values().size() == tab.values().size());
  for (std::size_t i = 0; i < back.values().size(); i += 97)
    CHECK(back.values()[i] == tab.values()[i]);
  CHECK(back.grid().h == doctest::Approx(tab.grid().h).epsilon(1e-14));
}

TEST_CASE("non-finite node values are rejected") {
  VelocityGrid grid;
  grid.lo = Vec3(-1, -1, -1);
  grid.h = 1.0;
  grid.n = {3, 3, 3};
  std::vector<double> vals(27, 0.1);
  vals[13] = std::nan("");
  CHECK_THROWS_AS(VelocityDistribution::tabulated(grid, std::move(vals)),
                  NonFiniteDensity);
}

TEST_CASE("species bookkeeping detects neutrality") {
  SpeciesSet set;
  set.species.push_back({+1.0, unit_maxwellian()});
  set.species.push_back(
      {-1.0, VelocityDistribution::maxwellian(1.0, Vec3::Zero(), 4.0)});
  CHECK(set.electroneutral());
  CHECK(set.net_charge_density() == doctest::Approx(0.0));
  CHECK(set.total_density() == doctest::Approx(2.0));
  set.species.push_back({+0.5, unit_maxwellian()});
  CHECK(!set.electroneutral());
  CHECK(set.net_charge_density() == doctest::Approx(0.5));
}

TEST_CASE("heavy tail flag stays clear for a maxwellian") {
  CHECK(!unit_maxwellian().heavy_tail_flag());
}
