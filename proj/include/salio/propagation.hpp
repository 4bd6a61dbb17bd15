#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "salio/config.hpp"
#include "salio/nav_state.hpp"
#include "salio/sensor_data.hpp"

namespace salio {

using StateCovariance = Mat18;

/// Time-sorted IMU-rate poses covering one scan interval; queried by the
/// deskew step with piecewise screw-linear interpolation.
struct PoseBuffer {
  std::vector<double> times;
  std::vector<RigidTransform> poses;

  bool covers(double t, double slack = 1e-9) const {
    return !times.empty() && t >= times.front() - slack && t <= times.back() + slack;
  }

  RigidTransform interpolate(double t) const {
    if (times.empty()) throw std::runtime_error("empty pose buffer");
    if (t <= times.front()) return poses.front();
    if (t >= times.back()) return poses.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const size_t hi = static_cast<size_t>(it - times.begin());
    const size_t lo = hi - 1;
    const double span = times[hi] - times[lo];
    const double s = span > 0.0 ? (t - times[lo]) / span : 0.0;
    const Vec3 dr = so3_log(poses[lo].rotation.transpose() * poses[hi].rotation);
    RigidTransform out;
    out.rotation = poses[lo].rotation * so3_exp(s * dr);
    out.translation = (1.0 - s) * poses[lo].translation + s * poses[hi].translation;
    return out;
  }
};

/// Static initialization from a stationary IMU stretch: gravity from the mean
/// specific force rescaled to 9.81 m/s^2, gyro bias from the mean rate.
inline std::pair<NavState, StateCovariance> initialize(
    const std::vector<ImuSample>& static_imu, const Config& cfg) {
  const int n = static_cast<int>(static_imu.size());
  if (n < cfg.min_init_samples) {
    throw std::runtime_error("initialization needs at least " +
                             std::to_string(cfg.min_init_samples) + " IMU samples, got " +
                             std::to_string(n));
  }
  Vec3 mean_gyro = Vec3::Zero();
  Vec3 mean_accel = Vec3::Zero();
  for (const auto& s : static_imu) {
    mean_gyro += s.gyro;
    mean_accel += s.accel;
  }
  mean_gyro /= n;
  mean_accel /= n;
  const double a_norm = mean_accel.norm();
  if (a_norm < 8.0 || a_norm > 12.0) {
    throw std::runtime_error("mean specific force norm " + std::to_string(a_norm) +
                             " m/s^2 is not consistent with a stationary platform");
  }

  NavState x;
  x.gravity = -mean_accel * (9.81 / a_norm);
  x.gyro_bias = mean_gyro;

  StateCovariance p = StateCovariance::Zero();
  auto set_block = [&p](int idx, double std) {
    p.block<3, 3>(idx, idx) = Mat3::Identity() * (std * std);
  };
  set_block(kIdxPos, cfg.init_pos_std);
  set_block(kIdxRot, cfg.init_rot_std);
  set_block(kIdxVel, cfg.init_vel_std);
  set_block(kIdxBg, cfg.init_bg_std);
  set_block(kIdxBa, cfg.init_ba_std);
  set_block(kIdxGrav, cfg.init_grav_std);
  return {x, p};
}

/// Error-state transition Jacobian of one zero-order-hold step of the
/// discrete model x' = x [+] dt * f(x, u, 0), in (dt, dr, dv, dbg, dba, dg)
/// ordering. Contract: matches central finite differences over boxplus.
inline Mat18 transition_jacobian(const NavState& x, const ImuSample& u, double dt) {
  const Vec3 w = u.gyro - x.gyro_bias;
  const Vec3 a = u.accel - x.accel_bias;
  const Mat3 r = x.rotation;

  Mat18 f = Mat18::Identity();
  f.block<3, 3>(kIdxPos, kIdxRot) = -0.5 * dt * dt * r * skew(a);
  f.block<3, 3>(kIdxPos, kIdxVel) = Mat3::Identity() * dt;
  f.block<3, 3>(kIdxPos, kIdxBa) = -0.5 * dt * dt * r;
  f.block<3, 3>(kIdxPos, kIdxGrav) = 0.5 * dt * dt * Mat3::Identity();
  f.block<3, 3>(kIdxRot, kIdxRot) = so3_exp(w * dt).transpose();
  f.block<3, 3>(kIdxRot, kIdxBg) = -so3_right_jacobian(w * dt) * dt;
  f.block<3, 3>(kIdxVel, kIdxRot) = -dt * r * skew(a);
  f.block<3, 3>(kIdxVel, kIdxBa) = -dt * r;
  f.block<3, 3>(kIdxVel, kIdxGrav) = Mat3::Identity() * dt;
  return f;
}

inline void propagate_mean(NavState& x, const ImuSample& u, double dt) {
  const Vec3 w = u.gyro - x.gyro_bias;
  const Vec3 a_world = x.rotation * (u.accel - x.accel_bias) + x.gravity;
  x.position += x.velocity * dt + 0.5 * dt * dt * a_world;
  x.velocity += a_world * dt;
  x.rotation = x.rotation * so3_exp(w * dt);
}

struct PropagationResult {
  NavState state;
  StateCovariance covariance;
  PoseBuffer buffer;
};

/// Propagates state and covariance from t_begin to t_end under zero-order
/// hold of the IMU readings (each sample applies from its own timestamp to
/// the next). The returned buffer records the pose at every step boundary.
inline PropagationResult forward_propagate(const NavState& x0, const StateCovariance& p0,
                                           const std::vector<ImuSample>& imu,
                                           double t_begin, double t_end, const Config& cfg) {
  PropagationResult out{x0, p0, {}};
  out.buffer.times.push_back(t_begin);
  out.buffer.poses.push_back(x0.pose());
  if (t_end <= t_begin) return out;
  if (imu.empty()) {
    out.buffer.times.push_back(t_end);
    out.buffer.poses.push_back(x0.pose());
    return out;
  }

  // Noise input Jacobian columns: gyro white, accel white, gyro bias walk,
  // accel bias walk. Densities enter as sigma^2 / dt so that one step
  // contributes ~ sigma^2 * dt.
  Eigen::Matrix<double, 12, 1> densities;
  densities << cfg.gyro_noise, cfg.gyro_noise, cfg.gyro_noise,
      cfg.accel_noise, cfg.accel_noise, cfg.accel_noise,
      cfg.gyro_bias_rw, cfg.gyro_bias_rw, cfg.gyro_bias_rw,
      cfg.accel_bias_rw, cfg.accel_bias_rw, cfg.accel_bias_rw;

  std::vector<double> bounds;
  bounds.push_back(t_begin);
  for (const auto& s : imu) {
    if (s.t > t_begin + 1e-12 && s.t < t_end - 1e-12) bounds.push_back(s.t);
  }
  bounds.push_back(t_end);

  for (size_t k = 0; k + 1 < bounds.size(); ++k) {
    const double ta = bounds[k];
    const double dt = bounds[k + 1] - ta;
    // Reading active on [ta, tb): the last sample at or before ta, or the
    // first sample when the interval starts before any reading.
    auto it = std::upper_bound(imu.begin(), imu.end(), ta + 1e-12,
                               [](double t, const ImuSample& s) { return t < s.t; });
    const ImuSample& u = (it == imu.begin()) ? imu.front() : *(it - 1);

    const Mat18 f = transition_jacobian(out.state, u, dt);
    Eigen::Matrix<double, 18, 12> g = Eigen::Matrix<double, 18, 12>::Zero();
    const Vec3 w = u.gyro - out.state.gyro_bias;
    g.block<3, 3>(kIdxRot, 0) = -so3_right_jacobian(w * dt) * dt;
    g.block<3, 3>(kIdxPos, 3) = -0.5 * dt * dt * out.state.rotation;
    g.block<3, 3>(kIdxVel, 3) = -dt * out.state.rotation;
    g.block<3, 3>(kIdxBg, 6) = Mat3::Identity() * dt;
    g.block<3, 3>(kIdxBa, 9) = Mat3::Identity() * dt;
    const Eigen::Matrix<double, 12, 1> q = densities.array().square() / std::max(dt, 1e-9);

    propagate_mean(out.state, u, dt);
    out.covariance = f * out.covariance * f.transpose() + g * q.asDiagonal() * g.transpose();

    out.buffer.times.push_back(bounds[k + 1]);
    out.buffer.poses.push_back(out.state.pose());
  }
  return out;
}

/// Re-expresses every point at the scan-end time: p' = T_L(t_end)^-1 T_L(t_p) p
/// with T_L(t) = T_I(t) * I_T_L. Offsets are zeroed in the output since the
/// points then share the single timestamp t_end.
inline LidarScan deskew(const LidarScan& scan, const PoseBuffer& buffer,
                        const RigidTransform& extrinsic) {
  LidarScan out;
  out.t_end = scan.t_end;
  out.points.reserve(scan.points.size());
  const RigidTransform t_end_inv = (buffer.interpolate(scan.t_end) * extrinsic).inverse();
  for (const auto& pt : scan.points) {
    const double t_p = scan.t_end + pt.offset;
    if (!buffer.covers(t_p)) {
      throw std::runtime_error("deskew: point offset " + std::to_string(pt.offset) +
                               " s is outside the pose buffer coverage");
    }
    const RigidTransform t_p_pose = buffer.interpolate(t_p) * extrinsic;
    out.points.push_back({0.0, t_end_inv * (t_p_pose * pt.xyz)});
  }
  return out;
}

}  // namespace salio
