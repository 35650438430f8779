#include "kinetic/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "kinetic/errors.hpp"
#include "kinetic/quadrature.hpp"

namespace kinetic {

double smoothstep_cutoff(double x) {
  if (x <= 1.0) return 1.0;
  if (x >= 2.0) return 0.0;
  double t = 2.0 - x;
  double t4 = t * t * t * t;
  return t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}

double smoothstep_cutoff_derivative(double x) {
  if (x <= 1.0 || x >= 2.0) return 0.0;
  double t = 2.0 - x;
  double omt = 1.0 - t;
  return -140.0 * t * t * t * omt * omt * omt;
}

namespace {

// Charged-sphere interior cap matched C^1 to 1/s at s = core.
inline double cap_value(double s, double core) {
  return (3.0 * core * core - s * s) / (2.0 * core * core * core);
}
inline double cap_derivative(double s, double core) {
  return -s / (core * core * core);
}

// Core-regularized 1/s: cap blended by the cutoff over s in [core, 2 core],
// exactly 1/s beyond 2 core.
double reg_inv(double s, double core) {
  if (core <= 0.0) return 1.0 / s;
  if (s >= 2.0 * core) return 1.0 / s;
  // beta = 1 below the core; skipping the 1/s term keeps s = 0 evaluable.
  if (s <= core) return cap_value(s, core);
  double beta = smoothstep_cutoff(s / core);
  return beta * cap_value(s, core) + (1.0 - beta) / s;
}

double reg_inv_derivative(double s, double core) {
  if (core <= 0.0) return -1.0 / (s * s);
  if (s >= 2.0 * core) return -1.0 / (s * s);
  if (s <= 0.0) return 0.0;
  if (s <= core) return cap_derivative(s, core);
  double beta = smoothstep_cutoff(s / core);
  double dbeta = smoothstep_cutoff_derivative(s / core) / core;
  return dbeta * (cap_value(s, core) - 1.0 / s) + beta * cap_derivative(s, core) +
         (1.0 - beta) * (-1.0 / (s * s));
}

std::uint64_t key_bits(double k) {
  std::uint64_t b;
  static_assert(sizeof b == sizeof k);
  std::memcpy(&b, &k, sizeof b);
  return b;
}

}  // namespace

struct RadialPotential::FourierCache {
  std::shared_mutex mutex;
  std::unordered_map<std::uint64_t, double> values;
};

RadialPotential RadialPotential::yukawa(double amplitude, double screening,
                                        double core) {
  if (!(screening > 0.0) || core < 0.0)
    throw ConfigError("potentials.yukawa", "screening must be > 0 and core >= 0");
  RadialPotential p;
  p.profile_ = Profile::yukawa;
  p.decay_ = Decay::fast;
  p.amp_ = amplitude;
  p.scale_ = screening;
  p.core_ = core;
  p.decay_exponent_ = 50.0;  // exponential; sentinel for "faster than any power"
  p.smooth_origin_ = core > 0.0;
  p.fcache_ = std::make_shared<FourierCache>();
  return p;
}

RadialPotential RadialPotential::gaussian(double amplitude, double width) {
  if (!(width > 0.0))
    throw ConfigError("potentials.gaussian", "width must be > 0");
  RadialPotential p;
  p.profile_ = Profile::gaussian;
  p.decay_ = Decay::fast;
  p.amp_ = amplitude;
  p.scale_ = width;
  p.decay_exponent_ = 50.0;
  p.smooth_origin_ = true;
  p.fcache_ = std::make_shared<FourierCache>();
  return p;
}

RadialPotential RadialPotential::coulomb_reg(double amplitude, double core) {
  if (core < 0.0) throw ConfigError("potentials.coulomb_reg", "core must be >= 0");
  RadialPotential p;
  p.profile_ = Profile::coulomb_reg;
  p.decay_ = Decay::coulomb_like;
  p.amp_ = amplitude;
  p.scale_ = std::max(core, 1.0);
  p.core_ = core;
  p.A_ = amplitude;
  p.decay_exponent_ = 1.0;
  p.smooth_origin_ = core > 0.0;
  p.fcache_ = std::make_shared<FourierCache>();
  return p;
}

RadialPotential RadialPotential::tabulated(std::vector<double> s,
                                           std::vector<double> phi, Decay decay,
                                           double coulomb_amplitude,
                                           double decay_exponent) {
  const char* op = "potentials.tabulated";
  if (s.size() < 3 || s.size() != phi.size())
    throw ConfigError(op, "need >= 3 matched nodes");
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s[i] > s[i - 1])) throw ConfigError(op, "nodes must increase");
  RadialPotential p;
  p.profile_ = Profile::tabulated;
  p.decay_ = decay;
  p.amp_ = 1.0;
  p.scale_ = s.back() / 4.0;
  p.core_ = s.front();
  p.A_ = coulomb_amplitude;
  p.decay_exponent_ = decay_exponent;
  p.smooth_origin_ = s.front() <= 0.0;
  p.table_ = CubicSpline(std::move(s), std::move(phi));
  p.fcache_ = std::make_shared<FourierCache>();
  return p;
}

double RadialPotential::raw_value(double s) const {
  switch (profile_) {
    case Profile::yukawa:
      return std::exp(-s / scale_) * reg_inv(s, core_);
    case Profile::gaussian:
      return std::exp(-0.5 * s * s / (scale_ * scale_));
    case Profile::coulomb_reg:
      return reg_inv(s, core_);
    case Profile::tabulated:
      if (s <= table_.x_back()) return table_(s);
      if (decay_ == Decay::coulomb_like) return A_ / (amp_ * s);
      return table_(table_.x_back()) *
             std::pow(table_.x_back() / s, decay_exponent_);
  }
  return 0.0;
}

double RadialPotential::raw_derivative(double s) const {
  switch (profile_) {
    case Profile::yukawa: {
      double e = std::exp(-s / scale_);
      return e * (reg_inv_derivative(s, core_) - reg_inv(s, core_) / scale_);
    }
    case Profile::gaussian:
      return -s / (scale_ * scale_) * raw_value(s);
    case Profile::coulomb_reg:
      return reg_inv_derivative(s, core_);
    case Profile::tabulated:
      if (s <= table_.x_back()) return table_.derivative(s);
      if (decay_ == Decay::coulomb_like) return -A_ / (amp_ * s * s);
      return -decay_exponent_ / s * raw_value(s);
  }
  return 0.0;
}

double RadialPotential::value(double s) const {
  if (s < 0.0) throw ConfigError("potentials.value", "radius must be >= 0");
  if (s == 0.0 && !smooth_origin_)
    throw SingularOrigin("potentials.value", "profile is singular at s = 0");
  return amp_ * raw_value(s);
}

double RadialPotential::derivative(double s) const {
  if (s < 0.0) throw ConfigError("potentials.derivative", "radius must be >= 0");
  if (s == 0.0) {
    if (!smooth_origin_)
      throw SingularOrigin("potentials.derivative", "profile is singular at s = 0");
    return 0.0;
  }
  return amp_ * raw_derivative(s);
}

double RadialPotential::gradient_support_radius(double tail_fraction) const {
  // Cumulative s^2 Phi'(s)^2 on a geometric grid; the coulomb tail beyond the
  // grid contributes A^2/R analytically.
  double lo = smooth_origin_ ? 0.0 : 0.05 * scale_;
  double hi = scale_;
  // extend until the local tail is negligible or provably coulomb
  double total = 0.0;
  std::vector<double> r_nodes{lo};
  std::vector<double> cum{0.0};
  auto f = [&](double s) {
    double d = derivative(std::max(s, 1e-300));
    return s * s * d * d;
  };
  for (int stage = 0; stage < 60; ++stage) {
    double inc = adaptive_simpson(f, r_nodes.back(), hi, 1e-12 * (1.0 + total));
    total += inc;
    r_nodes.push_back(hi);
    cum.push_back(total);
    bool tail_small;
    if (decay_ == Decay::coulomb_like)
      tail_small = hi > 8.0 * std::max(core_, scale_);
    else
      tail_small = inc <= 1e-10 * total && stage > 2;
    if (tail_small) break;
    hi *= 1.6;
  }
  double coulomb_tail =
      decay_ == Decay::coulomb_like ? amp_ * amp_ * (A_ / amp_) * (A_ / amp_) / hi
                                    : 0.0;
  total += coulomb_tail;
  for (std::size_t i = 0; i < cum.size(); ++i)
    if (total - cum[i] <= tail_fraction * total) return r_nodes[i];
  return r_nodes.back();
}

double RadialPotential::range(double tol) const {
  double peak = 0.0;
  double start = smooth_origin_ ? 0.0 : 1e-3 * scale_;
  for (int i = 0; i <= 64; ++i)
    peak = std::max(peak, std::abs(value(start + (4.0 * scale_) * i / 64.0)));
  double r = scale_;
  for (int i = 0; i < 400; ++i) {
    if (std::abs(value(r)) < tol * peak) return r;
    r *= 1.1;
    if (r > 1e12) break;
  }
  return r;
}

double RadialPotential::fourier(double k) const {
  if (k < 0.0) throw ConfigError("potentials.fourier", "wavenumber must be >= 0");
  {
    std::shared_lock lock(fcache_->mutex);
    auto it = fcache_->values.find(key_bits(k));
    if (it != fcache_->values.end()) return it->second;
  }
  double result;
  const double root = std::sqrt(2.0 / M_PI);
  if (k == 0.0) {
    if (decay_ == Decay::coulomb_like || decay_ == Decay::intermediate ||
        (profile_ == Profile::tabulated && decay_exponent_ <= 3.0))
      throw DivergentTransform("potentials.fourier",
                               "s^2 moment diverges for this decay class");
    double hi = range(1e-14) + 10.0 * scale_;
    result = root * adaptive_simpson(
                        [&](double s) { return s * s * value(s); }, 0.0, hi,
                        1e-13 * std::abs(amp_) * scale_ * scale_ * scale_);
  } else {
    auto sphi = [&](double s) { return s * value(std::max(s, 1e-300)); };
    double I;
    if (decay_ == Decay::coulomb_like) {
      // s Phi = A exactly beyond the regularized core; the tail integral of
      // A sin(ks) is the screened limit A cos(kS)/k.
      double S = profile_ == Profile::tabulated
                     ? table_.x_back()
                     : 2.0 * std::max(core_, 1e-6);
      I = oscillatory_sine(sphi, k, 0.0, S, 1e-13 * (1.0 + std::abs(amp_) * S)) +
          A_ * std::cos(k * S) / k;
    } else {
      double S = range(1e-14) + 10.0 * scale_;
      if (decay_ == Decay::intermediate) S = std::max(S, 1e5 * scale_);
      I = oscillatory_sine(sphi, k, 0.0, S,
                           1e-13 * (1.0 + std::abs(amp_) * scale_ * scale_));
    }
    result = root * I / k;
  }
  std::unique_lock lock(fcache_->mutex);
  fcache_->values.emplace(key_bits(k), result);
  return result;
}

std::string RadialPotential::cache_key() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d:%.17g:%.17g:%.17g:%.17g:%.17g",
                static_cast<int>(profile_), amp_, scale_, core_, A_,
                decay_exponent_);
  return buf;
}

ScaledPotential ScaledPotential::boltzmann(RadialPotential base, double eps) {
  if (!(eps > 0.0)) throw ConfigError("potentials.boltzmann", "eps must be > 0");
  return ScaledPotential(Family::boltzmann, std::move(base), eps, 1.0, eps);
}

ScaledPotential ScaledPotential::landau(RadialPotential base, double eps,
                                        double L) {
  if (!(eps > 0.0) || !(L > 0.0))
    throw ConfigError("potentials.landau", "eps and L must be > 0");
  return ScaledPotential(Family::landau, std::move(base), eps, eps, L);
}

ScaledPotential ScaledPotential::grazing(RadialPotential base, double eps,
                                         double ell) {
  if (!(eps > 0.0) || !(ell > 0.0))
    throw ConfigError("potentials.grazing", "eps and ell must be > 0");
  return ScaledPotential(Family::grazing, std::move(base), eps, eps, ell);
}

ScaledPotential ScaledPotential::coulomb_short(RadialPotential base, double eps) {
  if (!(eps > 0.0))
    throw ConfigError("potentials.coulomb_short", "eps must be > 0");
  if (base.decay() != RadialPotential::Decay::coulomb_like)
    throw ConfigError("potentials.coulomb_short", "base must be coulomb_like");
  return ScaledPotential(Family::coulomb_short, std::move(base), eps, 1.0, eps);
}

ScaledPotential ScaledPotential::coulomb_weak(RadialPotential base, double eps) {
  if (!(eps > 0.0))
    throw ConfigError("potentials.coulomb_weak", "eps must be > 0");
  if (base.decay() != RadialPotential::Decay::coulomb_like)
    throw ConfigError("potentials.coulomb_weak", "base must be coulomb_like");
  return ScaledPotential(Family::coulomb_weak, std::move(base), eps, eps, 1.0);
}

std::pair<double, Vec3> ScaledPotential::evaluate(const Vec3& x) const {
  double r = x.norm();
  if (r < 1e-14 * scale_) {
    if (!base_.smooth_at_origin())
      throw SingularOrigin("potentials.evaluate", "evaluation at the origin");
    return {amp_ * base_.value(0.0), Vec3::Zero()};
  }
  return {value(r), derivative(r) * (x / r)};
}

SplitPotential::SplitPotential(ScaledPotential phi, double M, double lambda)
    : phi_(std::move(phi)), M_(M), lambda_(lambda) {
  if (!(M > 0.0) || !(lambda > 0.0))
    throw ConfigError("potentials.split", "M and lambda must be > 0");
}

double SplitPotential::boltzmann_part(double r) const {
  double beta = smoothstep_cutoff(r / (M_ * lambda_));
  return beta == 0.0 ? 0.0 : phi_.value(r) * beta;
}

double SplitPotential::landau_part(double r) const {
  double beta = smoothstep_cutoff(r / (M_ * lambda_));
  return beta == 1.0 ? 0.0 : phi_.value(r) * (1.0 - beta);
}

Vec3 SplitPotential::boltzmann_gradient(const Vec3& x) const {
  double r = x.norm();
  if (r >= 2.0 * M_ * lambda_) return Vec3::Zero();
  auto [v, g] = phi_.evaluate(x);
  double beta = smoothstep_cutoff(r / (M_ * lambda_));
  double dbeta = smoothstep_cutoff_derivative(r / (M_ * lambda_)) / (M_ * lambda_);
  Vec3 rhat = r > 0 ? Vec3(x / r) : Vec3::Zero();
  return beta * g + v * dbeta * rhat;
}

Vec3 SplitPotential::landau_gradient(const Vec3& x) const {
  auto [v, g] = phi_.evaluate(x);
  double r = x.norm();
  double beta = smoothstep_cutoff(r / (M_ * lambda_));
  if (beta == 0.0) return g;
  double dbeta = smoothstep_cutoff_derivative(r / (M_ * lambda_)) / (M_ * lambda_);
  Vec3 rhat = r > 0 ? Vec3(x / r) : Vec3::Zero();
  return (1.0 - beta) * g - v * dbeta * rhat;
}

}  // namespace kinetic
