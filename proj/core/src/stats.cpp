#include "kinetic/stats.hpp"

#include <algorithm>
#include <cmath>

namespace kinetic {

double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (a <= 0.0) return 1.0;
  double lg = std::lgamma(a);
  if (x < a + 1.0) {
    // Series: P = x^a e^-x / Gamma(a) * sum x^n / (a)_{n+1}
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz continued fraction for Q.
  double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

double chi2_sf(double x, double dof) { return gamma_q(0.5 * dof, 0.5 * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double kolmogorov_sf(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::min(1.0, std::max(0.0, 2.0 * sum));
}

double ks_test_pvalue(std::vector<double> samples,
                      const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  std::size_t n = samples.size();
  if (n == 0) return 1.0;
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  double sn = std::sqrt(static_cast<double>(n));
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

double chi2_two_sample_pvalue(const std::vector<double>& a,
                              const std::vector<double>& b) {
  double ta = 0, tb = 0;
  for (double v : a) ta += v;
  for (double v : b) tb += v;
  if (ta <= 0 || tb <= 0) return 1.0;
  double stat = 0.0;
  int kept = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double col = a[i] + b[i];
    if (col <= 0) continue;
    ++kept;
    double ea = ta * col / (ta + tb);
    double eb = tb * col / (ta + tb);
    stat += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
  }
  if (kept < 2) return 1.0;
  return chi2_sf(stat, kept - 1);
}

double chi2_gof_pvalue(const std::vector<double>& observed,
                       const std::vector<double>& expected, int fitted_params) {
  double stat = 0.0;
  int kept = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0) continue;
    ++kept;
    double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  int dof = kept - 1 - fitted_params;
  if (dof < 1) return 1.0;
  return chi2_sf(stat, dof);
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  double den = n * sxx - sx * sx;
  LinearFit f{0, 0, 0};
  if (den == 0 || n < 2) return f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  double ss_tot = syy - sy * sy / n;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = y[i] - (f.slope * x[i] + f.intercept);
    ss_res += r * r;
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

double RunningMoments::std_error() const {
  return n > 1 ? std::sqrt(variance() / n) : 0.0;
}

}  // namespace kinetic
