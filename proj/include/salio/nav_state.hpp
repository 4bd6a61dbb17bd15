#pragma once

#include <Eigen/Core>

#include "salio/geometry.hpp"

namespace salio {

using Tangent18 = Eigen::Matrix<double, 18, 1>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

// Error-state block offsets, fixed ordering (dt, dr, dv, dbg, dba, dg).
inline constexpr int kIdxPos = 0;
inline constexpr int kIdxRot = 3;
inline constexpr int kIdxVel = 6;
inline constexpr int kIdxBg = 9;
inline constexpr int kIdxBa = 12;
inline constexpr int kIdxGrav = 15;
inline constexpr int kStateDim = 18;

/// 18-DoF navigation state: IMU pose, velocity, inertial biases, gravity.
struct NavState {
  Vec3 position = Vec3::Zero();       // W_t_I [m]
  Mat3 rotation = Mat3::Identity();   // W_R_I
  Vec3 velocity = Vec3::Zero();       // W_v_I [m/s]
  Vec3 gyro_bias = Vec3::Zero();      // [rad/s]
  Vec3 accel_bias = Vec3::Zero();     // [m/s^2]
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);  // W_g [m/s^2]

  RigidTransform pose() const { return {rotation, position}; }
};

/// Right perturbation retraction: rotation composes as R * Exp(dr), every
/// vector block adds.
inline NavState boxplus(const NavState& x, const Tangent18& delta) {
  NavState y = x;
  y.position += delta.segment<3>(kIdxPos);
  y.rotation = x.rotation * so3_exp(delta.segment<3>(kIdxRot));
  y.velocity += delta.segment<3>(kIdxVel);
  y.gyro_bias += delta.segment<3>(kIdxBg);
  y.accel_bias += delta.segment<3>(kIdxBa);
  y.gravity += delta.segment<3>(kIdxGrav);
  return y;
}

inline Tangent18 boxminus(const NavState& y, const NavState& x) {
  Tangent18 delta;
  delta.segment<3>(kIdxPos) = y.position - x.position;
  delta.segment<3>(kIdxRot) = so3_log(x.rotation.transpose() * y.rotation);
  delta.segment<3>(kIdxVel) = y.velocity - x.velocity;
  delta.segment<3>(kIdxBg) = y.gyro_bias - x.gyro_bias;
  delta.segment<3>(kIdxBa) = y.accel_bias - x.accel_bias;
  delta.segment<3>(kIdxGrav) = y.gravity - x.gravity;
  return delta;
}

}  // namespace salio
