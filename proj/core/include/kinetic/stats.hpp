#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace kinetic {

// Regularized lower incomplete gamma P(a,x); series for x < a+1, Lentz
// continued fraction otherwise.
double gamma_p(double a, double x);
inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

double chi2_sf(double x, double dof);   // survival function
double normal_cdf(double x);

// Kolmogorov limiting distribution Pr(sup > lambda).
double kolmogorov_sf(double lambda);

// One-sample KS test against a continuous CDF; samples need not be sorted.
// Applies the Stephens small-sample correction before the asymptotic SF.
double ks_test_pvalue(std::vector<double> samples,
                      const std::function<double(double)>& cdf);

// Two-sample chi-square homogeneity test on aligned count vectors.
// Bins where both counts are zero are dropped; dof = kept bins - 1.
double chi2_two_sample_pvalue(const std::vector<double>& a,
                              const std::vector<double>& b);

// Pearson chi-square of observed counts against expected counts (same total).
double chi2_gof_pvalue(const std::vector<double>& observed,
                       const std::vector<double>& expected,
                       int fitted_params = 0);

struct LinearFit {
  double slope, intercept, r2;
};
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

struct RunningMoments {
  double n = 0, mean = 0, m2 = 0;
  void add(double v) {
    n += 1;
    double d = v - mean;
    mean += d / n;
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
  double std_error() const;
};

}  // namespace kinetic
