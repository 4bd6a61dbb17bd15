#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <unordered_map>
#include <vector>

#include "salio/config.hpp"
#include "salio/voxel_key.hpp"

namespace salio {

struct VoxelizedScan {
  std::vector<Vec3> points;
  double voxel_size = 0.0;
};

/// One representative point per occupied voxel: the input point nearest the
/// voxel center, ties broken by lowest input index. Output preserves input
/// order (ascending surviving index), so the result is independent of hash
/// iteration order.
inline VoxelizedScan voxel_downsample(const std::vector<Vec3>& points, double d) {
  struct Winner {
    double dist2;
    std::size_t index;
  };
  std::unordered_map<VoxelKey, Winner, VoxelKeyHash> cells;
  cells.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const VoxelKey key = voxel_key_of(points[i], d);
    const Vec3 center((key.x + 0.5) * d, (key.y + 0.5) * d, (key.z + 0.5) * d);
    const double dist2 = (points[i] - center).squaredNorm();
    auto [it, inserted] = cells.try_emplace(key, Winner{dist2, i});
    if (!inserted && dist2 < it->second.dist2) {
      it->second = {dist2, i};
    }
  }
  std::vector<std::size_t> survivors;
  survivors.reserve(cells.size());
  for (const auto& [key, w] : cells) survivors.push_back(w.index);
  std::sort(survivors.begin(), survivors.end());

  VoxelizedScan out;
  out.voxel_size = d;
  out.points.reserve(survivors.size());
  for (const std::size_t i : survivors) out.points.push_back(points[i]);
  return out;
}

/// Controller state carried across frames.
struct VoxelizerState {
  std::deque<double> window;  // recent median ranges, size <= N_w
  double prev_error = 0.0;    // e_{t-1} [points]
  double voxel_size;          // d_{t-1} [m]
  double dt_scan;             // [s]
};

/// Per-frame controller telemetry, one row of the control CSV.
struct ControlDiagnostics {
  double t = 0.0;
  double median_range = 0.0;    // m_t
  double scale_indicator = 0.0; // mbar_t
  int n_temp = 0;
  int n_desired = 0;
  double error = 0.0;           // e_t
  double error_rate = 0.0;      // de_t
  double phi = 0.0;
  double psi_p = 0.0;
  double psi_d = 0.0;
  double gamma_p = 0.0;
  double gamma_d = 0.0;
  double kp = 0.0;
  double kd = 0.0;
  double delta_d = 0.0;
  double voxel_size = 0.0;      // d_t
  int n_out = 0;                // |V_t| at d_t
  bool skipped = false;         // empty frame, controller untouched
};

/// Median of point ranges (mean of the central pair for even counts), then
/// the window mean after inserting it. Mutates the window.
inline std::pair<double, double> scale_indicator(const VoxelizedScan& v_temp,
                                                 VoxelizerState& state, int window_size) {
  std::vector<double> ranges;
  ranges.reserve(v_temp.points.size());
  for (const auto& p : v_temp.points) ranges.push_back(p.norm());
  const std::size_t n = ranges.size();
  const std::size_t mid = n / 2;
  std::nth_element(ranges.begin(), ranges.begin() + mid, ranges.end());
  double median = ranges[mid];
  if (n % 2 == 0) {
    std::nth_element(ranges.begin(), ranges.begin() + mid - 1, ranges.begin() + mid);
    median = 0.5 * (median + ranges[mid - 1]);
  }
  state.window.push_back(median);
  while (static_cast<int>(state.window.size()) > window_size) state.window.pop_front();
  double mean = 0.0;
  for (const double m : state.window) mean += m;
  mean /= static_cast<double>(state.window.size());
  return {median, mean};
}

/// Scale-informed setpoint before rounding: saturates at n_max for
/// mbar >= tau_m via rho(m) = 1 - (1 - m/tau_m)^p, which has rho'(tau_m) = 0.
inline double setpoint_real(double mbar, const Config& cfg) {
  if (mbar >= cfg.scale_threshold) return static_cast<double>(cfg.n_max);
  const double rho = 1.0 - std::pow(1.0 - mbar / cfg.scale_threshold, cfg.setpoint_exponent);
  return cfg.n_min + (cfg.n_max - cfg.n_min) * rho;
}

inline int setpoint(double mbar, const Config& cfg) {
  return static_cast<int>(std::llround(setpoint_real(mbar, cfg)));
}

struct ScheduledGains {
  double phi = 0.0, psi_p = 0.0, psi_d = 0.0;
  double gamma_p = 0.0, gamma_d = 0.0;
  double kp = 0.0, kd = 0.0;
};

/// Sensitivity-informed gain scheduling: each gain interpolates between its
/// bounds by the geometric mean of the normalized scene scale and the
/// normalized error magnitude.
inline ScheduledGains schedule_gains(double mbar, double error, double error_rate,
                                     int n_desired, double dt_scan, const Config& cfg) {
  ScheduledGains g;
  g.phi = std::min(mbar, cfg.scale_threshold) / cfg.scale_threshold;
  const double e_cap = cfg.lambda_p * n_desired;
  const double de_cap = cfg.lambda_d * n_desired / dt_scan;
  g.psi_p = std::min(std::abs(error), e_cap) / e_cap;
  g.psi_d = std::min(std::abs(error_rate), de_cap) / de_cap;
  g.gamma_p = std::sqrt(g.phi * g.psi_p);
  g.gamma_d = std::sqrt(g.phi * g.psi_d);
  g.kp = cfg.kp_min + (cfg.kp_max - cfg.kp_min) * g.gamma_p;
  g.kd = cfg.kd_min + (cfg.kd_max - cfg.kd_min) * g.gamma_d;
  return g;
}

inline std::pair<double, double> tracking_error(const VoxelizerState& state,
                                                int n_temp, int n_desired) {
  const double e = static_cast<double>(n_desired - n_temp);
  const double de = (e - state.prev_error) / state.dt_scan;
  return {e, de};
}

/// PD update of the voxel size; negative gains reflect the inverse relation
/// between voxel size and point count. Clamps to [d_min, d_max] and commits
/// e_t and d_t into the state.
inline double control_step(VoxelizerState& state, int n_temp, int n_desired,
                           double kp, double kd, const Config& cfg) {
  const auto [e, de] = tracking_error(state, n_temp, n_desired);
  const double delta_d = -kp * e - kd * de;
  const double d = std::clamp(state.voxel_size + delta_d, cfg.d_min, cfg.d_max);
  state.prev_error = e;
  state.voxel_size = d;
  return d;
}

/// V_merge at d/2 for map integration, V at d for the state update.
inline std::pair<VoxelizedScan, VoxelizedScan> bi_resolution(
    const std::vector<Vec3>& points, double d) {
  VoxelizedScan merge = voxel_downsample(points, 0.5 * d);
  VoxelizedScan update = voxel_downsample(merge.points, d);
  return {std::move(merge), std::move(update)};
}

/// Ablation baselines. All consume the same scale-informed setpoint as the
/// scheduled controller when run under the ablation harness.
inline double baseline_controller(ControllerKind kind, const std::vector<Vec3>& scan_points,
                                  VoxelizerState& state, int n_temp, int n_desired,
                                  const Config& cfg) {
  const auto [e, de] = tracking_error(state, n_temp, n_desired);
  double d = state.voxel_size;
  switch (kind) {
    case ControllerKind::kFixed:
      d = cfg.d0;
      break;
    case ControllerKind::kLinearScaling:
      d = state.voxel_size * static_cast<double>(n_temp) / std::max(n_desired, 1);
      break;
    case ControllerKind::kThresholdSwitch: {
      const int n_coarse =
          static_cast<int>(voxel_downsample(scan_points, cfg.d_coarse).points.size());
      d = n_coarse < cfg.tau_n ? cfg.d_fine : cfg.d_coarse;
      break;
    }
    case ControllerKind::kVolumeScaling: {
      const int n_tmp =
          static_cast<int>(voxel_downsample(scan_points, cfg.d_temp_fixed).points.size());
      d = cfg.d_temp_fixed *
          std::cbrt(static_cast<double>(n_tmp) / std::max(n_desired, 1));
      break;
    }
    case ControllerKind::kPdFixedGains:
      return control_step(state, n_temp, n_desired, 0.5 * (cfg.kp_min + cfg.kp_max),
                          0.5 * (cfg.kd_min + cfg.kd_max), cfg);
    case ControllerKind::kScheduled:
      break;  // handled by the caller
  }
  d = std::clamp(d, cfg.d_min, cfg.d_max);
  state.prev_error = e;
  state.voxel_size = d;
  return d;
}

/// Shared (m, mbar, N_desired) stream for controller ablations, recorded by a
/// reference run and replayed so every strategy tracks the same setpoint.
struct SetpointSample {
  double median_range = 0.0;
  double scale_indicator = 0.0;
  int n_desired = 0;
};

struct VoxelizerFrame {
  VoxelizedScan v_temp;
  VoxelizedScan v_merge;
  VoxelizedScan v;
  ControlDiagnostics diag;
};

/// Per-scan orchestration of Alg. 1: temporary voxelization at d_{t-1},
/// scale indicator, setpoint, control, bi-resolution output.
class AdaptiveVoxelizer {
 public:
  AdaptiveVoxelizer(const Config& cfg, double dt_scan) : cfg_(cfg) {
    state_.voxel_size = cfg.d0;
    state_.dt_scan = dt_scan;
  }

  void set_setpoint_override(std::vector<SetpointSample> stream) {
    override_ = std::move(stream);
  }

  const VoxelizerState& state() const { return state_; }

  VoxelizerFrame process(const std::vector<Vec3>& points, double t, std::size_t frame_index) {
    VoxelizerFrame out;
    out.diag.t = t;
    out.diag.voxel_size = state_.voxel_size;
    if (points.empty()) {
      // No meaningful median; leave window, e_{t-1} and d untouched.
      out.diag.skipped = true;
      return out;
    }

    out.v_temp = voxel_downsample(points, state_.voxel_size);
    const int n_temp = static_cast<int>(out.v_temp.points.size());

    double median = 0.0, mbar = 0.0;
    int n_desired = 0;
    if (!override_.empty()) {
      if (frame_index >= override_.size()) {
        throw std::runtime_error("setpoint override stream shorter than the log");
      }
      median = override_[frame_index].median_range;
      mbar = override_[frame_index].scale_indicator;
      n_desired = override_[frame_index].n_desired;
    } else {
      std::tie(median, mbar) = scale_indicator(out.v_temp, state_, cfg_.window_size);
      n_desired = setpoint(mbar, cfg_);
    }

    const auto [e, de] = tracking_error(state_, n_temp, n_desired);
    const double d_prev = state_.voxel_size;
    double d = d_prev;
    ScheduledGains gains;
    if (cfg_.controller == ControllerKind::kScheduled) {
      gains = schedule_gains(mbar, e, de, n_desired, state_.dt_scan, cfg_);
      d = control_step(state_, n_temp, n_desired, gains.kp, gains.kd, cfg_);
    } else {
      if (cfg_.controller == ControllerKind::kPdFixedGains) {
        gains.kp = 0.5 * (cfg_.kp_min + cfg_.kp_max);
        gains.kd = 0.5 * (cfg_.kd_min + cfg_.kd_max);
      }
      d = baseline_controller(cfg_.controller, points, state_, n_temp, n_desired, cfg_);
    }

    std::tie(out.v_merge, out.v) = bi_resolution(points, d);

    auto& diag = out.diag;
    diag.median_range = median;
    diag.scale_indicator = mbar;
    diag.n_temp = n_temp;
    diag.n_desired = n_desired;
    diag.error = e;
    diag.error_rate = de;
    diag.phi = gains.phi;
    diag.psi_p = gains.psi_p;
    diag.psi_d = gains.psi_d;
    diag.gamma_p = gains.gamma_p;
    diag.gamma_d = gains.gamma_d;
    diag.kp = gains.kp;
    diag.kd = gains.kd;
    diag.delta_d = d - d_prev;
    diag.voxel_size = d;
    diag.n_out = static_cast<int>(out.v.points.size());
    return out;
  }

 private:
  Config cfg_;
  VoxelizerState state_;
  std::vector<SetpointSample> override_;
};

}  // namespace salio
