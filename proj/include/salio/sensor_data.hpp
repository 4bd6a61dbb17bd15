#pragma once

#include <vector>

#include "salio/geometry.hpp"

namespace salio {

struct ImuSample {
  double t = 0.0;            // [s]
  Vec3 gyro = Vec3::Zero();  // [rad/s]
  Vec3 accel = Vec3::Zero(); // [m/s^2]
};

struct LidarPoint {
  double offset = 0.0;      // [s], <= 0 relative to the scan end time
  Vec3 xyz = Vec3::Zero();  // LiDAR frame [m]
};

struct LidarScan {
  double t_end = 0.0;  // [s]
  std::vector<LidarPoint> points;
};

struct TrajectoryRecord {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Eigen::Vector4d quat_xyzw = Eigen::Vector4d(0, 0, 0, 1);
};

struct SensorLog {
  std::vector<ImuSample> imu;
  std::vector<LidarScan> scans;
  std::vector<TrajectoryRecord> ground_truth;  // empty when unavailable

  bool has_ground_truth() const { return !ground_truth.empty(); }
};

}  // namespace salio
