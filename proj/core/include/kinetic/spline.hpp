#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace kinetic {

// Natural cubic spline on strictly increasing nodes. Out-of-range queries
// clamp to the end values unless the caller checks bounds first.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> y);

  double operator()(double s) const;
  double derivative(double s) const;
  double x_front() const { return x_.front(); }
  double x_back() const { return x_.back(); }
  bool empty() const { return x_.empty(); }

 private:
  std::size_t locate(double s) const;
  std::vector<double> x_, y_, y2_;
};

inline CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  std::size_t n = x_.size();
  if (n < 3 || y_.size() != n)
    throw std::invalid_argument("CubicSpline: need >= 3 nodes");
  y2_.assign(n, 0.0);
  std::vector<double> u(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double sig = (x_[i] - x_[i - 1]) / (x_[i + 1] - x_[i - 1]);
    double p = sig * y2_[i - 1] + 2.0;
    y2_[i] = (sig - 1.0) / p;
    double d = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]) -
               (y_[i] - y_[i - 1]) / (x_[i] - x_[i - 1]);
    u[i] = (6.0 * d / (x_[i + 1] - x_[i - 1]) - sig * u[i - 1]) / p;
  }
  for (std::size_t i = n - 1; i-- > 1;) y2_[i] = y2_[i] * y2_[i + 1] + u[i];
  y2_[0] = y2_[n - 1] = 0.0;
}

inline std::size_t CubicSpline::locate(double s) const {
  std::size_t lo = 0, hi = x_.size() - 1;
  while (hi - lo > 1) {
    std::size_t mid = (lo + hi) / 2;
    (x_[mid] > s ? hi : lo) = mid;
  }
  return lo;
}

inline double CubicSpline::operator()(double s) const {
  if (s <= x_.front()) return y_.front();
  if (s >= x_.back()) return y_.back();
  std::size_t i = locate(s);
  double h = x_[i + 1] - x_[i];
  double a = (x_[i + 1] - s) / h, b = (s - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * y2_[i] + (b * b * b - b) * y2_[i + 1]) * h * h / 6.0;
}

inline double CubicSpline::derivative(double s) const {
  if (s <= x_.front()) s = x_.front();
  if (s >= x_.back()) s = x_.back();
  std::size_t i = locate(s);
  double h = x_[i + 1] - x_[i];
  double a = (x_[i + 1] - s) / h, b = (s - x_[i]) / h;
  return (y_[i + 1] - y_[i]) / h +
         ((3.0 * b * b - 1.0) * y2_[i + 1] - (3.0 * a * a - 1.0) * y2_[i]) * h / 6.0;
}

}  // namespace kinetic
