#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace kinetic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 outer(const Vec3& a, const Vec3& b) { return a * b.transpose(); }

inline Mat3 sym(const Mat3& m) { return 0.5 * (m + m.transpose()); }

// Clip negative eigenvalues to zero. `clipped` reports the magnitude of the
// most negative eigenvalue removed (0 when already PSD); callers decide
// whether that magnitude is tolerable relative to the trace.
struct PsdRepair {
  Mat3 value;
  double clipped;
};

inline PsdRepair psd_clip(const Mat3& m) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(sym(m));
  Vec3 ev = es.eigenvalues();
  double worst = 0.0;
  Vec3 clipped = ev;
  for (int i = 0; i < 3; ++i) {
    if (ev[i] < 0.0) {
      worst = std::max(worst, -ev[i]);
      clipped[i] = 0.0;
    }
  }
  Mat3 out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  return {sym(out), worst};
}

// Symmetric PSD square root; eigenvalues below -tol*max trigger nothing here,
// tiny negatives are clamped (integrators guard separately).
inline Mat3 sqrt_psd(const Mat3& d) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(sym(d));
  Vec3 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Orthonormal pair spanning the plane perpendicular to the unit vector n.
inline std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  int least = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(n[i]) < std::abs(n[least])) least = i;
  Vec3 e1 = n.cross(Vec3::Unit(least)).normalized();
  Vec3 e2 = n.cross(e1);
  return {e1, e2};
}

}  // namespace kinetic
