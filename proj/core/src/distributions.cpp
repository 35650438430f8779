#include "kinetic/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kinetic/errors.hpp"
#include "kinetic/io.hpp"
#include "kinetic/stats.hpp"

namespace kinetic {

namespace {

constexpr double kUnitTol = 1e-12;

void require_unit(const Vec3& theta, const char* op) {
  if (std::abs(theta.norm() - 1.0) > kUnitTol)
    throw DegenerateDirection(op, "direction must be unit length");
}

// Quantile of the chi distribution with 3 dof (speed of a unit Maxwellian).
double chi3_quantile(double q) {
  double lo = 0.0, hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (gamma_p(1.5, 0.5 * mid * mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double edge_weight(int i, int n) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; }

}  // namespace

double LineMarginal::operator()(double s) const {
  if (analytic)
    return n / std::sqrt(2.0 * M_PI * T) * std::exp(-0.5 * (s - m) * (s - m) / T);
  double u = (s - s0) / ds;
  if (u <= 0.0 || u >= double(values.size() - 1)) return 0.0;
  int j = static_cast<int>(u);
  double f = u - j;
  return values[j] * (1.0 - f) + values[j + 1] * f;
}

double LineMarginal::derivative(double s) const {
  if (analytic) return -(s - m) / T * (*this)(s);
  // Central difference of the sampled marginal; matches the interpolant to
  // second order away from the support edge.
  return ((*this)(s + ds) - (*this)(s - ds)) / (2.0 * ds);
}

double LineMarginal::s_min() const {
  return analytic ? m - 14.0 * std::sqrt(T) : s0;
}
double LineMarginal::s_max() const {
  return analytic ? m + 14.0 * std::sqrt(T) : s0 + ds * (values.size() - 1);
}

VelocityDistribution VelocityDistribution::maxwellian(double density,
                                                      const Vec3& mean,
                                                      double temperature) {
  if (!(density > 0.0) || !std::isfinite(density) || !(temperature > 0.0) ||
      !std::isfinite(temperature) || !mean.allFinite())
    throw NonFiniteDensity("distributions.maxwellian",
                           "density and temperature must be finite and positive");
  VelocityDistribution g;
  g.kind_ = Kind::maxwellian;
  g.density_ = density;
  g.mean_ = mean;
  g.temperature_ = temperature;
  return g;
}

VelocityDistribution VelocityDistribution::tabulated(const VelocityGrid& grid,
                                                     std::vector<double> values) {
  const char* op = "distributions.tabulated";
  if (grid.n[0] < 2 || grid.n[1] < 2 || grid.n[2] < 2 || !(grid.h > 0.0))
    throw NonFiniteDensity(op, "grid needs at least 2 nodes per axis and h > 0");
  if (values.size() != grid.count())
    throw NonFiniteDensity(op, "value count does not match grid");
  VelocityDistribution g;
  g.kind_ = Kind::tabulated;
  g.grid_ = grid;
  g.values_ = std::move(values);

  double h3 = grid.h * grid.h * grid.h;
  double mass = 0.0, heavy = 0.0;
  Vec3 first = Vec3::Zero();
  for (int i = 0; i < grid.n[0]; ++i)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int k = 0; k < grid.n[2]; ++k) {
        double v = g.values_[grid.index(i, j, k)];
        if (!std::isfinite(v) || v < 0.0)
          throw NonFiniteDensity(op, "node values must be finite and >= 0");
        double wq = edge_weight(i, grid.n[0]) * edge_weight(j, grid.n[1]) *
                    edge_weight(k, grid.n[2]);
        Vec3 w = grid.node(i, j, k);
        mass += wq * v;
        first += wq * v * w;
        heavy += wq * v * std::pow(w.norm(), 7.0);
        g.max_value_ = std::max(g.max_value_, v);
      }
  mass *= h3;
  first *= h3;
  heavy *= h3;
  if (!(mass > 0.0) || !std::isfinite(mass))
    throw NonFiniteDensity(op, "grid integral is not finite and positive");
  g.density_ = mass;
  g.mean_ = first / mass;
  double second = 0.0;
  for (int i = 0; i < grid.n[0]; ++i)
    for (int j = 0; j < grid.n[1]; ++j)
      for (int k = 0; k < grid.n[2]; ++k) {
        double wq = edge_weight(i, grid.n[0]) * edge_weight(j, grid.n[1]) *
                    edge_weight(k, grid.n[2]);
        second += wq * g.values_[grid.index(i, j, k)] *
                  (grid.node(i, j, k) - g.mean_).squaredNorm();
      }
  g.temperature_ = second * h3 / (3.0 * mass);
  g.heavy_tail_ = heavy > 1e12;
  return g;
}

VelocityDistribution VelocityDistribution::tabulated_from_file(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw ConfigError("distributions.tabulated_from_file", "cannot open " + path);
  VelocityGrid grid;
  for (int a = 0; a < 3; ++a) {
    std::uint64_t n = read_u64_le(is);
    if (n < 2 || n > 4096)
      throw ConfigError("distributions.tabulated_from_file",
                        "axis node count out of range");
    grid.n[a] = static_cast<int>(n);
  }
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) lo[a] = read_f64_le(is);
  for (int a = 0; a < 3; ++a) hi[a] = read_f64_le(is);
  grid.lo = lo;
  double h0 = (hi[0] - lo[0]) / (grid.n[0] - 1);
  for (int a = 0; a < 3; ++a) {
    double ha = (hi[a] - lo[a]) / (grid.n[a] - 1);
    if (!(ha > 0.0) || std::abs(ha - h0) > 1e-9 * std::abs(h0))
      throw ConfigError("distributions.tabulated_from_file",
                        "grid spacing must be uniform and equal across axes");
  }
  grid.h = h0;
  std::vector<double> values(grid.count());
  for (auto& v : values) v = read_f64_le(is);
  return tabulated(grid, std::move(values));
}

double VelocityDistribution::value(const Vec3& w) const {
  if (kind_ == Kind::maxwellian) {
    double q = (w - mean_).squaredNorm() / (2.0 * temperature_);
    return density_ * std::pow(2.0 * M_PI * temperature_, -1.5) * std::exp(-q);
  }
  Vec3 u = (w - grid_.lo) / grid_.h;
  for (int a = 0; a < 3; ++a) {
    if (u[a] < -1e-9 || u[a] > grid_.n[a] - 1 + 1e-9)
      throw OutOfGrid("distributions.value", "velocity outside tabulated grid");
    u[a] = std::clamp(u[a], 0.0, double(grid_.n[a] - 1));
  }
  int i = std::min(static_cast<int>(u[0]), grid_.n[0] - 2);
  int j = std::min(static_cast<int>(u[1]), grid_.n[1] - 2);
  int k = std::min(static_cast<int>(u[2]), grid_.n[2] - 2);
  double fx = u[0] - i, fy = u[1] - j, fz = u[2] - k;
  double acc = 0.0;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < 2; ++dk) {
        double wt = (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) * (dk ? fz : 1 - fz);
        acc += wt * values_[grid_.index(i + di, j + dj, k + dk)];
      }
  return acc;
}

Vec3 VelocityDistribution::gradient(const Vec3& w) const {
  if (kind_ == Kind::maxwellian) return -(w - mean_) / temperature_ * value(w);
  Vec3 out;
  double step = 0.5 * grid_.h;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = step;
    out[a] = (value(w + e) - value(w - e)) / (2.0 * step);
  }
  return out;
}

double VelocityDistribution::speed_percentile(double q) const {
  if (!(q > 0.0 && q < 1.0))
    throw ConfigError("distributions.speed_percentile", "q must be in (0,1)");
  if (kind_ == Kind::maxwellian)
    return mean_.norm() + std::sqrt(temperature_) * chi3_quantile(q);
  std::vector<std::pair<double, double>> radial;
  radial.reserve(values_.size());
  double total = 0.0;
  for (int i = 0; i < grid_.n[0]; ++i)
    for (int j = 0; j < grid_.n[1]; ++j)
      for (int k = 0; k < grid_.n[2]; ++k) {
        double m = values_[grid_.index(i, j, k)];
        if (m <= 0) continue;
        radial.emplace_back(grid_.node(i, j, k).norm(), m);
        total += m;
      }
  std::sort(radial.begin(), radial.end());
  double acc = 0.0;
  for (const auto& [r, m] : radial) {
    acc += m;
    if (acc >= q * total) return r + grid_.h * std::sqrt(3.0) * 0.5;
  }
  return radial.empty() ? 0.0 : radial.back().first + grid_.h;
}

double VelocityDistribution::support_radius_about(const Vec3& v) const {
  if (kind_ == Kind::maxwellian)
    return (mean_ - v).norm() + 13.0 * std::sqrt(temperature_);
  Vec3 lo = grid_.lo, hi = grid_.hi();
  double r = 0.0;
  for (int c = 0; c < 8; ++c) {
    Vec3 corner(c & 1 ? hi[0] : lo[0], c & 2 ? hi[1] : lo[1],
                c & 4 ? hi[2] : lo[2]);
    r = std::max(r, (corner - v).norm());
  }
  return r > 0.0 ? r : 1.0;
}

bool VelocityDistribution::contains(const Vec3& w) const {
  if (kind_ == Kind::maxwellian) return true;
  Vec3 u = (w - grid_.lo) / grid_.h;
  for (int a = 0; a < 3; ++a)
    if (u[a] < -1e-9 || u[a] > grid_.n[a] - 1 + 1e-9) return false;
  return true;
}

LineMarginal VelocityDistribution::line_marginal(const Vec3& theta) const {
  require_unit(theta, "distributions.line_marginal");
  LineMarginal out;
  out.theta = theta;
  if (kind_ == Kind::maxwellian) {
    out.analytic = true;
    out.n = density_;
    out.m = theta.dot(mean_);
    out.T = temperature_;
    return out;
  }
  // Cloud-in-cell projection of node masses onto the s axis; preserves the
  // total integral exactly.
  double smin = 1e300, smax = -1e300;
  Vec3 lo = grid_.lo, hi = grid_.hi();
  for (int c = 0; c < 8; ++c) {
    Vec3 corner(c & 1 ? hi[0] : lo[0], c & 2 ? hi[1] : lo[1],
                c & 4 ? hi[2] : lo[2]);
    smin = std::min(smin, theta.dot(corner));
    smax = std::max(smax, theta.dot(corner));
  }
  out.ds = grid_.h;
  out.s0 = smin - out.ds;
  int count = static_cast<int>((smax - out.s0) / out.ds) + 3;
  out.values.assign(count, 0.0);
  double h3 = grid_.h * grid_.h * grid_.h;
  for (int i = 0; i < grid_.n[0]; ++i)
    for (int j = 0; j < grid_.n[1]; ++j)
      for (int k = 0; k < grid_.n[2]; ++k) {
        double wq = edge_weight(i, grid_.n[0]) * edge_weight(j, grid_.n[1]) *
                    edge_weight(k, grid_.n[2]);
        double mass = wq * values_[grid_.index(i, j, k)] * h3;
        if (mass == 0.0) continue;
        double u = (theta.dot(grid_.node(i, j, k)) - out.s0) / out.ds;
        int cell = static_cast<int>(u);
        double f = u - cell;
        out.values[cell] += mass * (1.0 - f);
        out.values[cell + 1] += mass * f;
      }
  for (auto& v : out.values) v /= out.ds;
  return out;
}

Vec3 VelocityDistribution::sample(Substream& rng) const {
  if (kind_ == Kind::maxwellian)
    return mean_ + std::sqrt(temperature_) * rng.normal3();
  Vec3 lo = grid_.lo, hi = grid_.hi();
  for (int it = 0; it < 1000000; ++it) {
    Vec3 w(lo[0] + (hi[0] - lo[0]) * rng.uniform(),
           lo[1] + (hi[1] - lo[1]) * rng.uniform(),
           lo[2] + (hi[2] - lo[2]) * rng.uniform());
    if (rng.uniform() * max_value_ <= value(w)) return w;
  }
  throw NonFiniteDensity("distributions.sample",
                         "rejection sampling failed; density nearly zero");
}

const VelocityGrid& VelocityDistribution::grid() const {
  if (kind_ != Kind::tabulated)
    throw OutOfGrid("distributions.grid", "no grid for analytic distribution");
  return grid_;
}

const std::vector<double>& VelocityDistribution::values() const {
  if (kind_ != Kind::tabulated)
    throw OutOfGrid("distributions.values", "no grid for analytic distribution");
  return values_;
}

double SpeciesSet::net_charge_density() const {
  double acc = 0.0;
  for (const auto& s : species) acc += s.charge * s.dist.density();
  return acc;
}

double SpeciesSet::total_density() const {
  double acc = 0.0;
  for (const auto& s : species) acc += s.dist.density();
  return acc;
}

bool SpeciesSet::electroneutral(double rtol) const {
  double scale = 0.0;
  for (const auto& s : species) scale += std::abs(s.charge) * s.dist.density();
  if (scale == 0.0) return true;
  return std::abs(net_charge_density()) <= rtol * scale;
}

}  // namespace kinetic
