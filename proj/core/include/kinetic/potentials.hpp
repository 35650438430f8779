#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "kinetic/linalg.hpp"
#include "kinetic/spline.hpp"

namespace kinetic {

// C^3 cutoff: 1 on (-inf,1], 0 on [2,inf), order-7 polynomial ramp between.
double smoothstep_cutoff(double x);
double smoothstep_cutoff_derivative(double x);

// Radial interaction profile Phi(s) at unit scale. Core-regularized variants
// replace 1/s inside s < 2*core by a charged-sphere cap blended with the
// cutoff above, and are exactly Coulomb beyond 2*core.
class RadialPotential {
 public:
  enum class Decay { fast, intermediate, coulomb_like };
  enum class Profile { yukawa, gaussian, coulomb_reg, tabulated };

  // amplitude * exp(-s/screening) * core-regularized 1/s. core = 0 keeps the
  // bare 1/s singularity.
  static RadialPotential yukawa(double amplitude, double screening,
                                double core = 0.0);
  static RadialPotential gaussian(double amplitude, double width);
  static RadialPotential coulomb_reg(double amplitude, double core = 1.0);
  // Spline profile; decay metadata is trusted as given. For coulomb_like,
  // s*Phi(s) must equal coulomb_amplitude exactly beyond the last node.
  static RadialPotential tabulated(std::vector<double> s, std::vector<double> phi,
                                   Decay decay, double coulomb_amplitude = 0.0,
                                   double decay_exponent = 3.0);

  double value(double s) const;
  double derivative(double s) const;

  Profile profile() const { return profile_; }
  Decay decay() const { return decay_; }
  double decay_exponent() const { return decay_exponent_; }
  double coulomb_amplitude() const { return A_; }
  double core_radius() const { return core_; }
  bool smooth_at_origin() const { return smooth_origin_; }

  // Radius containing all but `tail_fraction` of the gradient-square mass
  // int s^2 Phi'(s)^2 ds; infinite-mass (coulomb) profiles measure the tail
  // of the convergent part beyond the core.
  double gradient_support_radius(double tail_fraction) const;

  // Scale beyond which |Phi| drops below tol * |Phi(core-ish peak)|; used to
  // size interaction windows. Coulomb-like profiles report the radius where
  // the amplitude ratio holds, which grows like 1/tol.
  double range(double tol) const;

  // Unitary radial Fourier transform. k = 0 is the s^2-moment limit and
  // throws DivergentTransform for coulomb_like decay. Values are memoized.
  double fourier(double k) const;

  // Distinguishes cached instances; stable across identical constructions.
  std::string cache_key() const;

 private:
  RadialPotential() = default;
  double raw_value(double s) const;
  double raw_derivative(double s) const;

  Profile profile_ = Profile::yukawa;
  Decay decay_ = Decay::fast;
  double amp_ = 1.0, scale_ = 1.0, core_ = 0.0;
  double A_ = 0.0;               // s*Phi -> A for coulomb_like
  double decay_exponent_ = 3.0;  // tail exponent metadata
  bool smooth_origin_ = false;
  CubicSpline table_;
  // fourier memo, shared so copies reuse work
  struct FourierCache;
  std::shared_ptr<FourierCache> fcache_;
};

// Scaled pair potential phi(x) = amp * Phi(|x|/scale) for the five scaling
// families of the tagged-particle models.
class ScaledPotential {
 public:
  enum class Family { boltzmann, landau, grazing, coulomb_short, coulomb_weak };

  static ScaledPotential boltzmann(RadialPotential base, double eps);
  static ScaledPotential landau(RadialPotential base, double eps, double L);
  static ScaledPotential grazing(RadialPotential base, double eps, double ell);
  static ScaledPotential coulomb_short(RadialPotential base, double eps);
  static ScaledPotential coulomb_weak(RadialPotential base, double eps);

  double value(double r) const { return amp_ * base_.value(r / scale_); }
  double derivative(double r) const {
    return amp_ / scale_ * base_.derivative(r / scale_);
  }
  // (phi, grad phi) at a point; SingularOrigin at x = 0 for singular cores.
  std::pair<double, Vec3> evaluate(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const { return evaluate(x).second; }

  const RadialPotential& base() const { return base_; }
  Family family() const { return family_; }
  double amplitude() const { return amp_; }
  double length_scale() const { return scale_; }
  double eps() const { return eps_; }
  double range(double tol = 1e-8) const { return scale_ * base_.range(tol); }

 private:
  ScaledPotential(Family f, RadialPotential base, double eps, double amp,
                  double scale)
      : family_(f), base_(std::move(base)), eps_(eps), amp_(amp), scale_(scale) {}
  Family family_;
  RadialPotential base_;
  double eps_, amp_, scale_;
};

// Short-range / long-range splitting phi = phi_B + phi_L with the cutoff at
// M * lambda: phi_B is supported in {r <= 2 M lambda}, phi_L vanishes on
// {r <= M lambda}.
class SplitPotential {
 public:
  SplitPotential(ScaledPotential phi, double M, double lambda);

  double boltzmann_part(double r) const;
  double landau_part(double r) const;
  Vec3 boltzmann_gradient(const Vec3& x) const;
  Vec3 landau_gradient(const Vec3& x) const;

  double split_radius() const { return M_ * lambda_; }
  double M() const { return M_; }
  double lambda() const { return lambda_; }
  const ScaledPotential& whole() const { return phi_; }

 private:
  ScaledPotential phi_;
  double M_, lambda_;
};

}  // namespace kinetic
