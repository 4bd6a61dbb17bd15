#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "salio/config.hpp"
#include "salio/sensor_data.hpp"

// Log directory layout:
//   imu.csv            header `t,wx,wy,wz,ax,ay,az`, one sample per row
//   scans/<t_end>.csv  header `offset,x,y,z`, one point per row, offset <= 0
//   gt.txt             optional, `t tx ty tz qx qy qz qw` per line
//   manifest.txt       optional, generator metadata, ignored on load
// Numbers in the CSVs are printed with %.17g and therefore reload to the
// identical double. Trajectory files carry 9 significant digits (timestamps
// as fixed 8-decimal), the common plain-text evaluation format.

namespace salio {

namespace detail {

inline std::vector<double> parse_csv_row(const std::string& line,
                                         size_t expected,
                                         const std::string& file,
                                         int lineno) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t end = line.find(',', start);
    fields.push_back(trim(end == std::string::npos ? line.substr(start)
                                                   : line.substr(start, end - start)));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  if (fields.size() != expected) {
    throw std::runtime_error(file + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(expected) + " fields, got " +
                             std::to_string(fields.size()));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (size_t col = 0; col < expected; ++col) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(fields[col], &pos));
      if (trim(fields[col].substr(pos)).size()) throw std::invalid_argument("");
    } catch (...) {
      throw std::runtime_error(file + ":" + std::to_string(lineno) + ": column " +
                               std::to_string(col + 1) + ": bad number '" + fields[col] + "'");
    }
  }
  return out;
}

inline std::string scan_filename(double t_end) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%017.6f.csv", t_end);
  return buf;
}

}  // namespace detail

inline std::vector<ImuSample> load_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ImuSample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || detail::trim(line).empty()) continue;  // header
    const auto v = detail::parse_csv_row(line, 7, path, lineno);
    ImuSample s;
    s.t = v[0];
    s.gyro = Vec3(v[1], v[2], v[3]);
    s.accel = Vec3(v[4], v[5], v[6]);
    if (!samples.empty() && s.t <= samples.back().t) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": timestamps must be strictly increasing");
    }
    samples.push_back(s);
  }
  return samples;
}

inline LidarScan load_scan_csv(const std::string& path, double t_end) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  LidarScan scan;
  scan.t_end = t_end;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || detail::trim(line).empty()) continue;
    const auto v = detail::parse_csv_row(line, 4, path, lineno);
    if (v[0] > 0.0) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": column 1: point offset must be <= 0");
    }
    scan.points.push_back({v[0], Vec3(v[1], v[2], v[3])});
  }
  return scan;
}

inline std::vector<TrajectoryRecord> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<TrajectoryRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (int i = 0; i < 8; ++i) {
      if (!(ls >> v[i])) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": expected 8 numbers `t tx ty tz qx qy qz qw`");
      }
    }
    TrajectoryRecord r;
    r.t = v[0];
    r.position = Vec3(v[1], v[2], v[3]);
    r.quat_xyzw = Eigen::Vector4d(v[4], v[5], v[6], v[7]);
    records.push_back(r);
  }
  return records;
}

inline void write_trajectory(const std::vector<TrajectoryRecord>& records,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[200];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.8f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                  r.t, r.position.x(), r.position.y(), r.position.z(),
                  r.quat_xyzw(0), r.quat_xyzw(1), r.quat_xyzw(2), r.quat_xyzw(3));
    out << buf;
  }
}

/// Loads a sensor log directory. Streams come back time-sorted; every scan is
/// checked to have IMU coverage over its sampling interval.
inline SensorLog load_log(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw std::runtime_error("not a log directory: " + dir);

  SensorLog log;
  log.imu = load_imu_csv((root / "imu.csv").string());

  const fs::path scan_dir = root / "scans";
  if (fs::is_directory(scan_dir)) {
    std::vector<std::pair<double, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(scan_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
      const std::string stem = entry.path().stem().string();
      try {
        files.emplace_back(std::stod(stem), entry.path());
      } catch (...) {
        throw std::runtime_error("scan filename is not a timestamp: " +
                                 entry.path().string());
      }
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t_end, path] : files) {
      log.scans.push_back(load_scan_csv(path.string(), t_end));
    }
  }

  const fs::path gt = root / "gt.txt";
  if (fs::exists(gt)) log.ground_truth = load_trajectory(gt.string());

  for (const auto& scan : log.scans) {
    if (scan.points.empty()) continue;
    double min_offset = 0.0;
    for (const auto& p : scan.points) min_offset = std::min(min_offset, p.offset);
    const double start = scan.t_end + min_offset;
    if (log.imu.empty() || log.imu.front().t > start || log.imu.back().t < scan.t_end) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", scan.t_end);
      throw std::runtime_error("no IMU coverage for scan at t_end=" + std::string(buf));
    }
  }
  return log;
}

inline void write_log(const SensorLog& log, const std::string& dir,
                      const std::string& manifest = "") {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "scans");

  {
    std::ofstream out(root / "imu.csv");
    if (!out) throw std::runtime_error("cannot write " + (root / "imu.csv").string());
    out << "t,wx,wy,wz,ax,ay,az\n";
    for (const auto& s : log.imu) {
      out << detail::fmt_double(s.t) << ',' << detail::fmt_double(s.gyro.x()) << ','
          << detail::fmt_double(s.gyro.y()) << ',' << detail::fmt_double(s.gyro.z()) << ','
          << detail::fmt_double(s.accel.x()) << ',' << detail::fmt_double(s.accel.y()) << ','
          << detail::fmt_double(s.accel.z()) << '\n';
    }
  }

  for (const auto& scan : log.scans) {
    const fs::path path = root / "scans" / detail::scan_filename(scan.t_end);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "offset,x,y,z\n";
    for (const auto& p : scan.points) {
      out << detail::fmt_double(p.offset) << ',' << detail::fmt_double(p.xyz.x()) << ','
          << detail::fmt_double(p.xyz.y()) << ',' << detail::fmt_double(p.xyz.z()) << '\n';
    }
  }

  if (log.has_ground_truth()) {
    write_trajectory(log.ground_truth, (root / "gt.txt").string());
  }
  if (!manifest.empty()) {
    std::ofstream out(root / "manifest.txt");
    out << manifest;
  }
}

}  // namespace salio
