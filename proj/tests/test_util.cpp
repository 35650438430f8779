#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "kinetic/io.hpp"
#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/stats.hpp"

using namespace kinetic;

TEST_CASE("substream determinism and independence") {
  Substream a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 64; ++i) {
    auto x = a.next_u64();
    CHECK(x == b.next_u64());
  }
  int diff = 0;
  Substream a2(42, 7);
  for (int i = 0; i < 64; ++i)
    if (a2.next_u64() != c.next_u64()) ++diff;
  CHECK(diff > 48);
}

TEST_CASE("stream_id separates argument positions") {
  CHECK(stream_id(1, 2, 3) != stream_id(2, 1, 3));
  CHECK(stream_id(1, 2, 3) != stream_id(1, 3, 2));
  CHECK(stream_id(5) != stream_id(0, 5));
}

TEST_CASE("uniform stays inside the open interval with sane moments") {
  Substream s(9, 0);
  RunningMoments m;
  for (int i = 0; i < 200000; ++i) {
    double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    m.add(u);
  }
  CHECK(std::abs(m.mean - 0.5) < 4.0 * m.std_error());
  CHECK(std::abs(m.variance() - 1.0 / 12.0) < 1e-3);
}

TEST_CASE("normal moments and KS fit") {
  Substream s(11, 3);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = s.normal();
  double p = ks_test_pvalue(xs, [](double x) { return normal_cdf(x); });
  CHECK(p > 0.01);
}

TEST_CASE("poisson mean and variance at small and large rate") {
  for (double lam : {3.7, 120.0}) {
    Substream s(13, (std::uint64_t)lam);
    RunningMoments m;
    for (int i = 0; i < 40000; ++i) m.add((double)s.poisson(lam));
    CHECK(std::abs(m.mean - lam) < 5.0 * m.std_error());
    CHECK(std::abs(m.variance() / lam - 1.0) < 0.05);
  }
}

TEST_CASE("gauss-hermite integrates gaussian moments") {
  const Rule1D& r = gauss_hermite(20);
  double mass = 0, second = 0;
  for (std::size_t i = 0; i < r.x.size(); ++i) {
    mass += r.w[i];
    second += r.w[i] * r.x[i] * r.x[i];
  }
  CHECK(mass == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  CHECK(second == doctest::Approx(0.5 * std::sqrt(M_PI)).epsilon(1e-12));
}

TEST_CASE("gauss-legendre is exact for polynomials") {
  Rule1D r = gauss_legendre_on(8, 0.0, 2.0);
  double cubic = 0;
  for (std::size_t i = 0; i < r.x.size(); ++i)
    cubic += r.w[i] * r.x[i] * r.x[i] * r.x[i];
  CHECK(cubic == doctest::Approx(4.0).epsilon(1e-13));
}

TEST_CASE("adaptive simpson hits analytic integrals") {
  double s = adaptive_simpson([](double x) { return std::sin(x); }, 0.0, M_PI,
                              1e-12);
  CHECK(s == doctest::Approx(2.0).epsilon(1e-10));
  double e = adaptive_simpson([](double x) { return std::exp(-x); }, 0.0, 40.0,
                              1e-12);
  CHECK(e == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("oscillatory sine matches the damped closed form") {
  // int_0^inf e^{-s} sin(omega s) ds = omega / (1 + omega^2)
  for (double omega : {0.5, 3.0, 20.0}) {
    double v = oscillatory_sine([](double s) { return std::exp(-s); }, omega,
                                0.0, 60.0, 1e-12);
    CHECK(v == doctest::Approx(omega / (1 + omega * omega)).epsilon(1e-8));
  }
}

TEST_CASE("linear fit recovers an exact line") {
  std::vector<double> x{0, 1, 2, 3, 4}, y;
  for (double xi : x) y.push_back(2.5 * xi - 1.25);
  LinearFit f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(-1.25).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("distribution tails match tabulated values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(chi2_sf(0.0, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(chi2_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK(kolmogorov_sf(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-8));
}

TEST_CASE("chi2 gof flags a gross mismatch and passes a match") {
  std::vector<double> expected{100, 100, 100, 100};
  std::vector<double> close{104, 96, 101, 99};
  std::vector<double> far{160, 40, 130, 70};
  CHECK(chi2_gof_pvalue(close, expected) > 0.05);
  CHECK(chi2_gof_pvalue(far, expected) < 1e-6);
}

TEST_CASE("dtoa17 round-trips doubles bit-exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e308, 5e-324, -0.0, 2.718281828459045,
                   -1.7976931348623157e308}) {
    std::string s = dtoa17(v);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
}

TEST_CASE("csv writer quotes per rfc 4180 with crlf rows") {
  std::ostringstream os;
  CsvWriter w(os);
  w.field("plain").field("with,comma").field("with\"quote").end_row();
  w.field("multi\nline").field((std::int64_t)-7).end_row();
  CHECK(os.str() ==
        "plain,\"with,comma\",\"with\"\"quote\"\r\n\"multi\nline\",-7\r\n");
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex(std::string("")) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("parallel_map preserves order and ignores worker count") {
  auto sq = [](std::size_t i) { return double(i) * double(i); };
  auto one = parallel_map<double>(1000, sq, 1);
  auto many = parallel_map<double>(1000, sq, 5);
  REQUIRE(one.size() == 1000);
  CHECK(one == many);
  CHECK(one[31] == 961.0);
}

TEST_CASE("parallel_for touches every index exactly once") {
  std::vector<int> hits(512, 0);
  parallel_for(512, [&](std::size_t i) { hits[i] += 1; }, 3);
  for (int h : hits) CHECK(h == 1);
}
