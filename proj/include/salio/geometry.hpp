#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace salio {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

/// Rodrigues formula; below 1e-8 rad falls back to the second-order Taylor
/// series so the result stays orthonormal for vanishing angles.
inline Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * k + c * k * k;
}

/// Inverse of so3_exp. Angles within 1e-6 of pi are recovered by axis
/// extraction from R + R^T, where the antisymmetric part loses the axis.
inline Vec3 so3_log(const Mat3& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta < 1e-8) {
    return vee(r - r.transpose()) * 0.5;
  }
  if (theta > M_PI - 1e-6) {
    // R ~ I + (1 - cos t) (a a^T - I); diagonal of (R + I)/ (1 - cos t) gives a^2.
    const Mat3 b = (r + Mat3::Identity()) / (1.0 - cos_theta);
    int i = 0;
    b.diagonal().maxCoeff(&i);
    Vec3 axis;
    axis[i] = std::sqrt(std::max(b(i, i), 0.0));
    for (int j = 0; j < 3; ++j) {
      if (j != i) axis[j] = b(i, j) / axis[i];
    }
    axis.normalize();
    // Sign of the axis is free at pi; fix it by the antisymmetric remainder,
    // falling back to a lexicographic convention when it vanishes.
    const Vec3 w = vee(r - r.transpose());
    double dir = w.dot(axis);
    if (std::abs(dir) < 1e-12) {
      dir = (axis.z() != 0.0) ? axis.z() : ((axis.y() != 0.0) ? axis.y() : axis.x());
    }
    if (dir < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * std::sin(theta)) * vee(r - r.transpose());
}

/// Right Jacobian of SO(3): Exp(w + dw) ~ Exp(w) Exp(Jr(w) dw).
inline Mat3 so3_right_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-6) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

inline Mat3 so3_right_jacobian_inv(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 k = skew(w);
  if (theta < 1e-6) {
    return Mat3::Identity() + 0.5 * k + (1.0 / 12.0) * k * k;
  }
  const double t2 = theta * theta;
  const double coef = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * k + coef * k * k;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
         std::abs(r.determinant() - 1.0) < tol;
}

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
};

/// Unit quaternion as (x, y, z, w) with w >= 0, for trajectory output.
inline Eigen::Vector4d rotation_to_quaternion(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q.coeffs();
}

inline Mat3 quaternion_to_rotation(const Eigen::Vector4d& xyzw) {
  Eigen::Quaterniond q(xyzw(3), xyzw(0), xyzw(1), xyzw(2));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace salio
