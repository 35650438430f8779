#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

#include "kinetic/linalg.hpp"

namespace kinetic {

struct Rule1D {
  std::vector<double> x, w;
  std::size_t size() const { return x.size(); }
};

// Gauss-Legendre on (-1,1) with total weight 2. Rules are cached per order.
const Rule1D& gauss_legendre(int n);
Rule1D gauss_legendre_on(int n, double a, double b);

// Gauss-Hermite for weight e^{-t^2} on the real line, total weight sqrt(pi).
const Rule1D& gauss_hermite(int n);

namespace detail {
inline double norm1(double v) { return std::abs(v); }
inline double norm1(const std::complex<double>& v) { return std::abs(v); }
inline double norm1(const Vec3& v) { return v.cwiseAbs().sum(); }
inline double norm1(const Mat3& v) { return v.cwiseAbs().sum(); }

template <class F, class V>
V simpson_rec(F& f, double a, double b, const V& fa, const V& fm, const V& fb,
              const V& whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  V fl = f(0.5 * (a + m));
  V fr = f(0.5 * (m + b));
  V left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
  V right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
  V sum = left + right;
  if (depth <= 0 || norm1(V(sum - whole)) <= 15.0 * tol)
    return sum + (sum - whole) / 15.0;
  return simpson_rec(f, a, m, fa, fl, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, fr, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson with Richardson extrapolation; works for double, complex,
// Vec3, Mat3 integrands. tol is absolute.
template <class F>
auto adaptive_simpson(F&& f, double a, double b, double tol, int max_depth = 24) {
  using V = std::decay_t<decltype(f(a))>;
  if (a == b) return V(f(a) * 0.0);
  V fa = f(a);
  V fm = f(0.5 * (a + b));
  V fb = f(b);
  V whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Fixed-step composite Simpson over [a,b] with n panels (n even internally).
template <class F>
auto composite_simpson(F&& f, double a, double b, int n) {
  using V = std::decay_t<decltype(f(a))>;
  if (n < 2) n = 2;
  if (n % 2) ++n;
  double h = (b - a) / n;
  V acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc = acc + f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return V(acc * (h / 3.0));
}

// Integrates f(s)*sin(omega*s) over [a,b] by summing half-period panels with
// adaptive Simpson per panel; stable for slowly decaying oscillatory tails.
double oscillatory_sine(const std::function<double(double)>& f, double omega,
                        double a, double b, double tol);

}  // namespace kinetic
