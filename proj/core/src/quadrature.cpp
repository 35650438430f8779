#include "kinetic/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>

namespace kinetic {

namespace {

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal recurrence
// matrix, weights mu0 * (first eigenvector component)^2.
Rule1D golub_welsch(int n, const std::vector<double>& offdiag, double mu0) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    J(i, i + 1) = offdiag[i];
    J(i + 1, i) = offdiag[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    r.x[i] = es.eigenvalues()[i];
    double v0 = es.eigenvectors()(0, i);
    r.w[i] = mu0 * v0 * v0;
  }
  return r;
}

std::mutex g_rule_mutex;
std::map<int, Rule1D> g_legendre, g_hermite;

}  // namespace

const Rule1D& gauss_legendre(int n) {
  std::lock_guard<std::mutex> lock(g_rule_mutex);
  auto it = g_legendre.find(n);
  if (it != g_legendre.end()) return it->second;
  std::vector<double> off(n - 1);
  for (int j = 1; j < n; ++j)
    off[j - 1] = j / std::sqrt(4.0 * j * j - 1.0);
  return g_legendre.emplace(n, golub_welsch(n, off, 2.0)).first->second;
}

Rule1D gauss_legendre_on(int n, double a, double b) {
  const Rule1D& base = gauss_legendre(n);
  Rule1D r;
  r.x.resize(n);
  r.w.resize(n);
  double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < n; ++i) {
    r.x[i] = mid + half * base.x[i];
    r.w[i] = half * base.w[i];
  }
  return r;
}

const Rule1D& gauss_hermite(int n) {
  std::lock_guard<std::mutex> lock(g_rule_mutex);
  auto it = g_hermite.find(n);
  if (it != g_hermite.end()) return it->second;
  std::vector<double> off(n - 1);
  for (int j = 1; j < n; ++j) off[j - 1] = std::sqrt(0.5 * j);
  return g_hermite.emplace(n, golub_welsch(n, off, std::sqrt(M_PI))).first->second;
}

double oscillatory_sine(const std::function<double(double)>& f, double omega,
                        double a, double b, double tol) {
  auto g = [&](double s) { return f(s) * std::sin(omega * s); };
  if (omega <= 0.0 || (b - a) * omega < 2.0 * M_PI)
    return adaptive_simpson(g, a, b, tol);
  double half_period = M_PI / omega;
  // Align panels with the zeros of sin so consecutive panels alternate sign.
  double first = std::ceil(a / half_period) * half_period;
  double acc = 0.0;
  if (first > a) acc += adaptive_simpson(g, a, std::min(first, b), tol);
  double lo = first;
  double panel_tol = tol * half_period / (b - a);
  while (lo < b) {
    double hi = std::min(lo + half_period, b);
    acc += adaptive_simpson(g, lo, hi, panel_tol, 16);
    lo = hi;
  }
  return acc;
}

}  // namespace kinetic
