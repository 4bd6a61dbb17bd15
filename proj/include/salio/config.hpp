#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salio/geometry.hpp"

namespace salio {

enum class ControllerKind {
  kScheduled,       // PD with sensitivity-informed gain scheduling
  kPdFixedGains,    // PD with gains at the midpoints of their bounds
  kFixed,           // constant voxel size d0
  kLinearScaling,   // d <- d * N / N_desired
  kThresholdSwitch, // coarse/fine switching on a point-count threshold
  kVolumeScaling,   // d <- d_temp * (N_temp / N_desired)^(1/3)
};

enum class SearchKind {
  kPruned,  // region-based candidates + box-distance pruning
  kAll26,   // root voxel plus all 26 neighbours
  kFace6,   // root voxel plus the 6 face-sharing neighbours
};

enum class MetricMode {
  kHybrid,     // point-to-plane with point-to-point fallback
  kPlaneOnly,  // point-to-plane only
};

/// Every user parameter of the pipeline. Unset keys keep the defaults below.
struct Config {
  // Scale indicator and setpoint
  int window_size = 5;             // N_w, sliding window of median ranges
  int n_min = 1000;                // setpoint lower bound
  int n_max = 4000;                // setpoint upper bound
  double setpoint_exponent = 2.0;  // p, saturating power
  double scale_threshold = 30.0;   // tau_m [m]

  // Controller
  double lambda_p = 0.1;
  double lambda_d = 0.2;
  double d_min = 0.02;   // [m]
  double d_max = 1.0;    // [m]
  double kp_min = 1e-6;
  double kp_max = 1e-4;
  double kd_min = 1e-9;
  double kd_max = 1e-7;
  double d0 = 0.25;      // initial voxel size [m]
  ControllerKind controller = ControllerKind::kScheduled;

  // Baseline controller parameters
  int n_desired_fixed = 3000;
  double d_coarse = 0.25;      // [m]
  double d_fine = 0.05;        // [m]
  int tau_n = 1000;            // threshold-switch point count
  double d_temp_fixed = 0.25;  // [m], volume-scaling reference size

  // Map and correspondence search
  double d_root = 0.5;           // root voxel size [m]
  double tau_closest = -1.0;     // <= 0 selects d_root / 3 (exact search)
  int max_points_per_voxel = 50;
  int plane_min_points = 5;
  double plane_lambda_thresh = 0.01;  // [m^2], smallest-eigenvalue gate
  double crop_radius = 0.0;           // <= 0 disables map cropping
  SearchKind search = SearchKind::kPruned;

  // Estimator
  MetricMode metric = MetricMode::kHybrid;
  double lambda_po = 0.1;
  double tau_converge = 1e-3;
  int max_iterations = 5;
  double epsilon_dir = 1e-6;  // [m], undefined-direction guard
  double r_floor = 1e-12;     // [m^2], measurement variance floor

  // Sensor noise
  double sigma_range = 0.02;                       // [m]
  double sigma_bearing = 0.05 * M_PI / 180.0;      // [rad]
  double gyro_noise = 1e-3;    // [rad/s/sqrt(Hz)]
  double accel_noise = 1e-2;   // [m/s^2/sqrt(Hz)]
  double gyro_bias_rw = 1e-5;  // [rad/s^2/sqrt(Hz)]
  double accel_bias_rw = 1e-4; // [m/s^3/sqrt(Hz)]

  // Initialization
  double init_duration = 1.0;  // [s] of stationary IMU consumed at startup
  int min_init_samples = 20;
  double init_pos_std = 1e-4;
  double init_rot_std = 1e-4;
  double init_vel_std = 1e-2;
  double init_bg_std = 1e-3;
  double init_ba_std = 1e-2;
  double init_grav_std = 1e-2;

  // LiDAR-IMU extrinsic I_T_L
  Eigen::Vector4d extrinsic_quat = Eigen::Vector4d(0, 0, 0, 1);  // (x,y,z,w)
  Vec3 extrinsic_trans = Vec3::Zero();

  double closest_threshold() const {
    return tau_closest > 0.0 ? tau_closest : d_root / 3.0;
  }

  RigidTransform extrinsic() const {
    return {quaternion_to_rotation(extrinsic_quat), extrinsic_trans};
  }

  void validate() const;
};

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kScheduled: return "scheduled";
    case ControllerKind::kPdFixedGains: return "pd_fixed";
    case ControllerKind::kFixed: return "fixed";
    case ControllerKind::kLinearScaling: return "linear";
    case ControllerKind::kThresholdSwitch: return "threshold";
    case ControllerKind::kVolumeScaling: return "volume";
  }
  return "?";
}

inline const char* to_string(SearchKind k) {
  switch (k) {
    case SearchKind::kPruned: return "pruned";
    case SearchKind::kAll26: return "all26";
    case SearchKind::kFace6: return "face6";
  }
  return "?";
}

inline const char* to_string(MetricMode m) {
  return m == MetricMode::kHybrid ? "hybrid" : "plane_only";
}

inline ControllerKind controller_from_string(const std::string& s) {
  if (s == "scheduled") return ControllerKind::kScheduled;
  if (s == "pd_fixed") return ControllerKind::kPdFixedGains;
  if (s == "fixed") return ControllerKind::kFixed;
  if (s == "linear") return ControllerKind::kLinearScaling;
  if (s == "threshold") return ControllerKind::kThresholdSwitch;
  if (s == "volume") return ControllerKind::kVolumeScaling;
  throw std::invalid_argument("unknown controller kind: " + s);
}

inline SearchKind search_from_string(const std::string& s) {
  if (s == "pruned") return SearchKind::kPruned;
  if (s == "all26") return SearchKind::kAll26;
  if (s == "face6") return SearchKind::kFace6;
  throw std::invalid_argument("unknown search kind: " + s);
}

inline MetricMode metric_from_string(const std::string& s) {
  if (s == "hybrid") return MetricMode::kHybrid;
  if (s == "plane_only") return MetricMode::kPlaneOnly;
  throw std::invalid_argument("unknown metric mode: " + s);
}

inline void Config::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("config key '" + key + "': " + why);
  };
  if (window_size < 1) fail("window_size", "must be >= 1");
  if (n_min < 1 || n_max < n_min) fail("n_min/n_max", "need 1 <= n_min <= n_max");
  if (setpoint_exponent <= 1.0) fail("setpoint_exponent", "must be > 1");
  if (scale_threshold <= 0.0) fail("scale_threshold", "must be > 0");
  if (lambda_p <= 0.0 || lambda_p > 1.0) fail("lambda_p", "must be in (0, 1]");
  if (lambda_d <= 0.0 || lambda_d > 1.0) fail("lambda_d", "must be in (0, 1]");
  if (d_min <= 0.0 || d_max < d_min) fail("d_min/d_max", "need 0 < d_min <= d_max");
  if (kp_min <= 0.0 || kp_max < kp_min) fail("kp_min/kp_max", "need 0 < kp_min <= kp_max");
  if (kd_min <= 0.0 || kd_max < kd_min) fail("kd_min/kd_max", "need 0 < kd_min <= kd_max");
  if (d0 < d_min || d0 > d_max) fail("d0", "must lie in [d_min, d_max]");
  if (d_root <= 0.0) fail("d_root", "must be > 0");
  if (max_points_per_voxel < 1) fail("max_points_per_voxel", "must be >= 1");
  if (plane_min_points < 3) fail("plane_min_points", "must be >= 3");
  if (plane_lambda_thresh <= 0.0) fail("plane_lambda_thresh", "must be > 0");
  if (lambda_po <= 0.0) fail("lambda_po", "must be > 0");
  if (tau_converge <= 0.0) fail("tau_converge", "must be > 0");
  if (max_iterations < 1) fail("max_iterations", "must be >= 1");
  if (sigma_range <= 0.0) fail("sigma_range", "must be > 0");
  if (sigma_bearing <= 0.0) fail("sigma_bearing", "must be > 0");
  if (gyro_noise <= 0.0) fail("gyro_noise", "must be > 0");
  if (accel_noise <= 0.0) fail("accel_noise", "must be > 0");
  if (init_duration <= 0.0) fail("init_duration", "must be > 0");
  if (min_init_samples < 2) fail("min_init_samples", "must be >= 2");
  if (n_desired_fixed < 1) fail("n_desired_fixed", "must be >= 1");
  if (d_coarse <= 0.0 || d_fine <= 0.0) fail("d_coarse/d_fine", "must be > 0");
  if (d_temp_fixed <= 0.0) fail("d_temp_fixed", "must be > 0");
  if (std::abs(extrinsic_quat.norm() - 1.0) > 1e-6)
    fail("extrinsic_quat", "must be a unit quaternion");
}

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Parses `key = value` lines; '#' starts a comment. Unknown keys and
/// invariant violations raise std::invalid_argument naming the key.
inline Config parse_config_text(std::istream& in, const std::string& origin) {
  Config cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto as_double = [&] {
      try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (detail::trim(value.substr(pos)).size()) throw std::invalid_argument("");
        return v;
      } catch (...) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + value + "'");
      }
    };
    auto as_int = [&] {
      const double v = as_double();
      if (v != std::floor(v)) {
        throw std::invalid_argument("config key '" + key + "': expected integer");
      }
      return static_cast<int>(v);
    };
    auto as_vec = [&](int n) {
      std::istringstream vs(value);
      std::vector<double> out;
      double v;
      while (vs >> v) out.push_back(v);
      if (static_cast<int>(out.size()) != n) {
        throw std::invalid_argument("config key '" + key + "': expected " +
                                    std::to_string(n) + " numbers");
      }
      return out;
    };

    if (key == "window_size") cfg.window_size = as_int();
    else if (key == "n_min") cfg.n_min = as_int();
    else if (key == "n_max") cfg.n_max = as_int();
    else if (key == "setpoint_exponent") cfg.setpoint_exponent = as_double();
    else if (key == "scale_threshold") cfg.scale_threshold = as_double();
    else if (key == "lambda_p") cfg.lambda_p = as_double();
    else if (key == "lambda_d") cfg.lambda_d = as_double();
    else if (key == "d_min") cfg.d_min = as_double();
    else if (key == "d_max") cfg.d_max = as_double();
    else if (key == "kp_min") cfg.kp_min = as_double();
    else if (key == "kp_max") cfg.kp_max = as_double();
    else if (key == "kd_min") cfg.kd_min = as_double();
    else if (key == "kd_max") cfg.kd_max = as_double();
    else if (key == "d0") cfg.d0 = as_double();
    else if (key == "controller") cfg.controller = controller_from_string(value);
    else if (key == "n_desired_fixed") cfg.n_desired_fixed = as_int();
    else if (key == "d_coarse") cfg.d_coarse = as_double();
    else if (key == "d_fine") cfg.d_fine = as_double();
    else if (key == "tau_n") cfg.tau_n = as_int();
    else if (key == "d_temp_fixed") cfg.d_temp_fixed = as_double();
    else if (key == "d_root") cfg.d_root = as_double();
    else if (key == "tau_closest") cfg.tau_closest = as_double();
    else if (key == "max_points_per_voxel") cfg.max_points_per_voxel = as_int();
    else if (key == "plane_min_points") cfg.plane_min_points = as_int();
    else if (key == "plane_lambda_thresh") cfg.plane_lambda_thresh = as_double();
    else if (key == "crop_radius") cfg.crop_radius = as_double();
    else if (key == "search") cfg.search = search_from_string(value);
    else if (key == "metric") cfg.metric = metric_from_string(value);
    else if (key == "lambda_po") cfg.lambda_po = as_double();
    else if (key == "tau_converge") cfg.tau_converge = as_double();
    else if (key == "max_iterations") cfg.max_iterations = as_int();
    else if (key == "epsilon_dir") cfg.epsilon_dir = as_double();
    else if (key == "r_floor") cfg.r_floor = as_double();
    else if (key == "sigma_range") cfg.sigma_range = as_double();
    else if (key == "sigma_bearing") cfg.sigma_bearing = as_double();
    else if (key == "gyro_noise") cfg.gyro_noise = as_double();
    else if (key == "accel_noise") cfg.accel_noise = as_double();
    else if (key == "gyro_bias_rw") cfg.gyro_bias_rw = as_double();
    else if (key == "accel_bias_rw") cfg.accel_bias_rw = as_double();
    else if (key == "init_duration") cfg.init_duration = as_double();
    else if (key == "min_init_samples") cfg.min_init_samples = as_int();
    else if (key == "init_pos_std") cfg.init_pos_std = as_double();
    else if (key == "init_rot_std") cfg.init_rot_std = as_double();
    else if (key == "init_vel_std") cfg.init_vel_std = as_double();
    else if (key == "init_bg_std") cfg.init_bg_std = as_double();
    else if (key == "init_ba_std") cfg.init_ba_std = as_double();
    else if (key == "init_grav_std") cfg.init_grav_std = as_double();
    else if (key == "extrinsic_quat") {
      const auto v = as_vec(4);
      cfg.extrinsic_quat = Eigen::Vector4d(v[0], v[1], v[2], v[3]);
    } else if (key == "extrinsic_trans") {
      const auto v = as_vec(3);
      cfg.extrinsic_trans = Vec3(v[0], v[1], v[2]);
    } else {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_config_text(in, path);
}

inline void write_config_text(const Config& cfg, std::ostream& out) {
  using detail::fmt_double;
  auto kv = [&](const char* key, const std::string& value) {
    out << key << " = " << value << "\n";
  };
  kv("window_size", std::to_string(cfg.window_size));
  kv("n_min", std::to_string(cfg.n_min));
  kv("n_max", std::to_string(cfg.n_max));
  kv("setpoint_exponent", fmt_double(cfg.setpoint_exponent));
  kv("scale_threshold", fmt_double(cfg.scale_threshold));
  kv("lambda_p", fmt_double(cfg.lambda_p));
  kv("lambda_d", fmt_double(cfg.lambda_d));
  kv("d_min", fmt_double(cfg.d_min));
  kv("d_max", fmt_double(cfg.d_max));
  kv("kp_min", fmt_double(cfg.kp_min));
  kv("kp_max", fmt_double(cfg.kp_max));
  kv("kd_min", fmt_double(cfg.kd_min));
  kv("kd_max", fmt_double(cfg.kd_max));
  kv("d0", fmt_double(cfg.d0));
  kv("controller", to_string(cfg.controller));
  kv("n_desired_fixed", std::to_string(cfg.n_desired_fixed));
  kv("d_coarse", fmt_double(cfg.d_coarse));
  kv("d_fine", fmt_double(cfg.d_fine));
  kv("tau_n", std::to_string(cfg.tau_n));
  kv("d_temp_fixed", fmt_double(cfg.d_temp_fixed));
  kv("d_root", fmt_double(cfg.d_root));
  kv("tau_closest", fmt_double(cfg.tau_closest));
  kv("max_points_per_voxel", std::to_string(cfg.max_points_per_voxel));
  kv("plane_min_points", std::to_string(cfg.plane_min_points));
  kv("plane_lambda_thresh", fmt_double(cfg.plane_lambda_thresh));
  kv("crop_radius", fmt_double(cfg.crop_radius));
  kv("search", to_string(cfg.search));
  kv("metric", to_string(cfg.metric));
  kv("lambda_po", fmt_double(cfg.lambda_po));
  kv("tau_converge", fmt_double(cfg.tau_converge));
  kv("max_iterations", std::to_string(cfg.max_iterations));
  kv("epsilon_dir", fmt_double(cfg.epsilon_dir));
  kv("r_floor", fmt_double(cfg.r_floor));
  kv("sigma_range", fmt_double(cfg.sigma_range));
  kv("sigma_bearing", fmt_double(cfg.sigma_bearing));
  kv("gyro_noise", fmt_double(cfg.gyro_noise));
  kv("accel_noise", fmt_double(cfg.accel_noise));
  kv("gyro_bias_rw", fmt_double(cfg.gyro_bias_rw));
  kv("accel_bias_rw", fmt_double(cfg.accel_bias_rw));
  kv("init_duration", fmt_double(cfg.init_duration));
  kv("min_init_samples", std::to_string(cfg.min_init_samples));
  kv("init_pos_std", fmt_double(cfg.init_pos_std));
  kv("init_rot_std", fmt_double(cfg.init_rot_std));
  kv("init_vel_std", fmt_double(cfg.init_vel_std));
  kv("init_bg_std", fmt_double(cfg.init_bg_std));
  kv("init_ba_std", fmt_double(cfg.init_ba_std));
  kv("init_grav_std", fmt_double(cfg.init_grav_std));
  kv("extrinsic_quat", fmt_double(cfg.extrinsic_quat(0)) + " " +
                           fmt_double(cfg.extrinsic_quat(1)) + " " +
                           fmt_double(cfg.extrinsic_quat(2)) + " " +
                           fmt_double(cfg.extrinsic_quat(3)));
  kv("extrinsic_trans", fmt_double(cfg.extrinsic_trans(0)) + " " +
                            fmt_double(cfg.extrinsic_trans(1)) + " " +
                            fmt_double(cfg.extrinsic_trans(2)));
}

inline void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  write_config_text(cfg, out);
}

}  // namespace salio
