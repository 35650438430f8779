#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kinetic/linalg.hpp"
#include "kinetic/rng.hpp"

namespace kinetic {

struct VelocityGrid {
  Vec3 lo;              // position of node (0,0,0)
  double h = 0;         // uniform spacing, all axes
  std::array<int, 3> n{};  // nodes per axis

  Vec3 hi() const {
    return lo + h * Vec3(n[0] - 1, n[1] - 1, n[2] - 1);
  }
  std::size_t count() const {
    return std::size_t(n[0]) * n[1] * n[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * n[1] + j) * n[2] + k;
  }
  Vec3 node(int i, int j, int k) const { return lo + h * Vec3(i, j, k); }
};

// Marginal of the velocity density along a direction: H(s) = integral of g
// over the plane theta.w = s. Analytic for a Maxwellian, sampled on a uniform
// s-grid (projection of the trilinear interpolant) otherwise.
struct LineMarginal {
  Vec3 theta;
  bool analytic = false;
  double n = 0, m = 0, T = 0;  // Maxwellian marginal parameters
  double s0 = 0, ds = 0;
  std::vector<double> values;

  double operator()(double s) const;
  double derivative(double s) const;
  double s_min() const;
  double s_max() const;
};

// One species' velocity density g(w); the spatial density n = integral g dw
// is folded into the normalization.
class VelocityDistribution {
 public:
  enum class Kind { maxwellian, tabulated };

  static VelocityDistribution maxwellian(double density, const Vec3& mean,
                                         double temperature);
  // Node values in grid row-major order (k fastest). Values must be finite
  // and nonnegative; the integral must be finite and positive.
  static VelocityDistribution tabulated(const VelocityGrid& grid,
                                        std::vector<double> values);
  // Little-endian file: 3 u64 dims, then lo.xyz, hi.xyz as f64, then values.
  static VelocityDistribution tabulated_from_file(const std::string& path);

  Kind kind() const { return kind_; }
  double density() const { return density_; }
  Vec3 mean() const { return mean_; }
  // Scalar temperature (1/3n) int |w-mean|^2 g dw.
  double temperature() const { return temperature_; }

  double value(const Vec3& w) const;
  Vec3 gradient(const Vec3& w) const;

  // Quantile of the speed |w|; used to bound truncation radii.
  double speed_percentile(double q) const;

  // Radius about v holding all numerically relevant mass; shell quadratures
  // centered on v integrate out to it.
  double support_radius_about(const Vec3& v) const;

  // True when value and gradient accept w: everywhere for a Maxwellian,
  // inside the grid box for a tabulated law. The density is zero beyond the
  // box, so quadratures skip nodes outside instead of evaluating them.
  bool contains(const Vec3& w) const;

  // |theta| must be 1 within 1e-12.
  LineMarginal line_marginal(const Vec3& theta) const;

  // Draw one velocity (Maxwellian: direct; tabulated: rejection on the grid).
  Vec3 sample(Substream& rng) const;

  // True when the |w|^(6+kappa) moment proxy exceeded the documented bound at
  // construction; heavy tails degrade every truncation estimate downstream.
  bool heavy_tail_flag() const { return heavy_tail_; }

  const VelocityGrid& grid() const;
  const std::vector<double>& values() const;

 private:
  VelocityDistribution() = default;

  Kind kind_ = Kind::maxwellian;
  double density_ = 0, temperature_ = 0;
  Vec3 mean_ = Vec3::Zero();
  bool heavy_tail_ = false;
  // tabulated state
  VelocityGrid grid_{};
  std::vector<double> values_;
  double max_value_ = 0;
};

struct Species {
  double charge = 1.0;
  VelocityDistribution dist;
};

struct SpeciesSet {
  std::vector<Species> species;

  // Sum of charge * density over species, and the neutrality test against
  // the total |charge| * density scale.
  double net_charge_density() const;
  bool electroneutral(double rtol = 1e-10) const;
  double total_density() const;
};

}  // namespace kinetic
