#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "salio/voxel_key.hpp"

namespace salio {

using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Work counters of one point-to-point search: voxels whose point lists were
/// scanned and the total points compared.
struct SearchStats {
  int n_accessed = 0;
  int n_eval = 0;
};

/// Candidate voxels by the query's position inside its root voxel. Each axis
/// classifies the local coordinate into thirds (low / mid / high); the k
/// non-mid axes span 2^k candidates: the root plus the offset combinations.
/// Never more than 8 of the 27 neighbours.
inline std::vector<VoxelKey> candidate_voxels(const Vec3& p, double d_root) {
  const VoxelKey root = voxel_key_of(p, d_root);
  int offset[3] = {0, 0, 0};
  const double cell[3] = {p.x() / d_root, p.y() / d_root, p.z() / d_root};
  const std::int64_t base[3] = {root.x, root.y, root.z};
  for (int a = 0; a < 3; ++a) {
    const double u = cell[a] - static_cast<double>(base[a]);
    if (u < 1.0 / 3.0) offset[a] = -1;
    else if (u >= 2.0 / 3.0) offset[a] = 1;
  }
  std::vector<VoxelKey> out;
  out.reserve(8);
  out.push_back(root);
  for (int mask = 1; mask < 8; ++mask) {
    VoxelKey k = root;
    bool feasible = true;
    if (mask & 1) { if (offset[0] == 0) feasible = false; else k.x += offset[0]; }
    if (mask & 2) { if (offset[1] == 0) feasible = false; else k.y += offset[1]; }
    if (mask & 4) { if (offset[2] == 0) feasible = false; else k.z += offset[2]; }
    if (feasible) out.push_back(k);
  }
  return out;
}

/// Squared Euclidean distance from p to the axis-aligned box of `key`. The
/// per-axis excess construction reduces to the face, edge, or corner distance
/// and never exceeds the distance to any point inside the box, also in
/// floating point, which makes pruning on it conservative.
inline double box_distance_sq(const Vec3& p, const VoxelKey& key, double d_root) {
  double acc = 0.0;
  const std::int64_t idx[3] = {key.x, key.y, key.z};
  for (int a = 0; a < 3; ++a) {
    const double lo = static_cast<double>(idx[a]) * d_root;
    const double hi = lo + d_root;
    const double excess = std::max({lo - p[a], 0.0, p[a] - hi});
    acc += excess * excess;
  }
  return acc;
}

inline double distance_to_voxel(const Vec3& p, const VoxelKey& key, double d_root) {
  return std::sqrt(box_distance_sq(p, key, d_root));
}

struct StoredPoint {
  Vec3 position = Vec3::Zero();  // world frame
  Mat3 covariance = Mat3::Zero();
};

struct PlaneParams {
  Vec3 normal = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();
  Vec3 eigenvalues = Vec3::Zero();  // ascending
  Mat6 cov_nq = Mat6::Zero();       // blocks [n; q]
  bool valid = false;
};

struct RootVoxel {
  std::vector<StoredPoint> points;  // oldest first
  PlaneParams plane;
};

struct PlaneCorrespondence {
  Vec3 normal;
  Vec3 centroid;
  Mat6 cov_nq;
};

struct PointCorrespondence {
  Vec3 target;
  Mat3 covariance;
  double distance = 0.0;
  SearchStats stats;
};

/// World-frame voxel hash map with per-voxel plane statistics.
///
/// Plane fit: centroid q and scatter A = (1/N) sum (p-q)(p-q)^T; the normal is
/// the eigenvector of the smallest eigenvalue l1, valid when N >= min_points,
/// l1 < lambda_thresh and l2 - l1 > 1e-9 (the covariance propagation below is
/// singular at eigenvalue crossings). Sign convention: n^T q <= 0, ties
/// resolved toward the +z (then +y, +x) hemisphere.
///
/// Cov(n, q) by first-order perturbation of the eigenproblem:
///   dq/dp_j = I / N
///   dn/dp_j = sum_{k=2,3} u_k (n^T (p_j - q) u_k^T + u_k^T (p_j - q) n^T)
///             / (N (l1 - lk))
/// accumulated against the stored per-point covariances.
class VoxelMap {
 public:
  VoxelMap(double d_root, int max_points_per_voxel, int plane_min_points,
           double plane_lambda_thresh)
      : d_root_(d_root),
        max_points_(max_points_per_voxel),
        min_points_(plane_min_points),
        lambda_thresh_(plane_lambda_thresh) {}

  double root_size() const { return d_root_; }
  std::size_t voxel_count() const { return voxels_.size(); }

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : voxels_) n += v.points.size();
    return n;
  }

  const RootVoxel* find(const VoxelKey& key) const {
    const auto it = voxels_.find(key);
    return it == voxels_.end() ? nullptr : &it->second;
  }

  void insert(std::span<const StoredPoint> batch) {
    std::unordered_set<VoxelKey, VoxelKeyHash> touched;
    for (const auto& sp : batch) {
      const VoxelKey key = voxel_key_of(sp.position, d_root_);
      auto& voxel = voxels_[key];
      voxel.points.push_back(sp);
      if (static_cast<int>(voxel.points.size()) > max_points_) {
        voxel.points.erase(voxel.points.begin());  // evict oldest
      }
      touched.insert(key);
    }
    for (const auto& key : touched) refit_plane(voxels_[key]);
  }

  void insert(const std::vector<StoredPoint>& batch) {
    insert(std::span<const StoredPoint>(batch.data(), batch.size()));
  }

  /// 3-sigma gated plane lookup over candidate voxels; among survivors
  /// returns the plane minimizing the normalized squared residual.
  std::optional<PlaneCorrespondence> match_plane(const Vec3& p_w, const Mat3& cov_w,
                                                 std::span<const VoxelKey> candidates) const {
    const RootVoxel* best = nullptr;
    double best_score = std::numeric_limits<double>::infinity();
    for (const auto& key : candidates) {
      const RootVoxel* voxel = find(key);
      if (voxel == nullptr || !voxel->plane.valid) continue;
      const auto& pl = voxel->plane;
      const double z = pl.normal.dot(p_w - pl.centroid);
      Eigen::Matrix<double, 6, 1> h;
      h.head<3>() = p_w - pl.centroid;  // d z / d n
      h.tail<3>() = -pl.normal;         // d z / d q
      double var = h.dot(pl.cov_nq * h) + pl.normal.dot(cov_w * pl.normal);
      var = std::max(var, 1e-12);
      if (z * z >= 9.0 * var) continue;
      const double score = z * z / var;
      if (score < best_score) {
        best_score = score;
        best = voxel;
      }
    }
    if (best == nullptr) return std::nullopt;
    return PlaneCorrespondence{best->plane.normal, best->plane.centroid, best->plane.cov_nq};
  }

  /// Nearest stored point over the candidate voxels. The best distance starts
  /// at tau_closest; the root list is scanned unconditionally, every other
  /// candidate only if its box distance can still beat the current best
  /// (prune = true). Returns empty when nothing beats tau_closest.
  std::optional<PointCorrespondence> nn_search(const Vec3& p_w,
                                               std::span<const VoxelKey> candidates,
                                               double tau_closest, bool prune,
                                               SearchStats& stats) const {
    double best_d2 = tau_closest * tau_closest;
    const StoredPoint* best = nullptr;
    bool first = true;
    for (const auto& key : candidates) {
      const RootVoxel* voxel = find(key);
      if (voxel == nullptr) {
        first = false;
        continue;
      }
      if (!first && prune && box_distance_sq(p_w, key, d_root_) >= best_d2) continue;
      first = false;
      ++stats.n_accessed;
      stats.n_eval += static_cast<int>(voxel->points.size());
      for (const auto& sp : voxel->points) {
        const double d2 = (sp.position - p_w).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = &sp;
        }
      }
    }
    if (best == nullptr) return std::nullopt;
    return PointCorrespondence{best->position, best->covariance, std::sqrt(best_d2), stats};
  }

  std::optional<PointCorrespondence> nn_search_pruned(const Vec3& p_w, double tau_closest,
                                                      SearchStats& stats) const {
    const auto candidates = candidate_voxels(p_w, d_root_);
    return nn_search(p_w, candidates, tau_closest, true, stats);
  }

  std::vector<VoxelKey> all_26_keys(const Vec3& p_w) const {
    const VoxelKey root = voxel_key_of(p_w, d_root_);
    std::vector<VoxelKey> keys;
    keys.reserve(27);
    keys.push_back(root);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          keys.push_back({root.x + dx, root.y + dy, root.z + dz});
        }
    return keys;
  }

  std::vector<VoxelKey> face_6_keys(const Vec3& p_w) const {
    const VoxelKey root = voxel_key_of(p_w, d_root_);
    return {root,
            {root.x - 1, root.y, root.z}, {root.x + 1, root.y, root.z},
            {root.x, root.y - 1, root.z}, {root.x, root.y + 1, root.z},
            {root.x, root.y, root.z - 1}, {root.x, root.y, root.z + 1}};
  }

  /// Drops voxels whose center is outside the L-inf ball of `radius` around
  /// `center`. Disabled in all default configurations.
  void crop(const Vec3& center, double radius) {
    for (auto it = voxels_.begin(); it != voxels_.end();) {
      const Vec3 c((it->first.x + 0.5) * d_root_, (it->first.y + 0.5) * d_root_,
                   (it->first.z + 0.5) * d_root_);
      if ((c - center).cwiseAbs().maxCoeff() > radius) {
        it = voxels_.erase(it);
      } else {
        ++it;
      }
    }
  }

  /// One row per voxel, sorted by key for reproducible output.
  void dump_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::vector<const std::pair<const VoxelKey, RootVoxel>*> rows;
    rows.reserve(voxels_.size());
    for (const auto& kv : voxels_) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      const auto& ka = a->first;
      const auto& kb = b->first;
      if (ka.x != kb.x) return ka.x < kb.x;
      if (ka.y != kb.y) return ka.y < kb.y;
      return ka.z < kb.z;
    });
    out << "kx,ky,kz,nx,ny,nz,qx,qy,qz,lambda1,valid,count\n";
    char buf[320];
    for (const auto* kv : rows) {
      const auto& pl = kv->second.plane;
      std::snprintf(buf, sizeof(buf),
                    "%lld,%lld,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%zu\n",
                    static_cast<long long>(kv->first.x), static_cast<long long>(kv->first.y),
                    static_cast<long long>(kv->first.z), pl.normal.x(), pl.normal.y(),
                    pl.normal.z(), pl.centroid.x(), pl.centroid.y(), pl.centroid.z(),
                    pl.eigenvalues(0), pl.valid ? 1 : 0, kv->second.points.size());
      out << buf;
    }
  }

 private:
  void refit_plane(RootVoxel& voxel) {
    auto& pl = voxel.plane;
    pl = PlaneParams{};
    const int n = static_cast<int>(voxel.points.size());
    if (n < min_points_) return;

    Vec3 q = Vec3::Zero();
    for (const auto& sp : voxel.points) q += sp.position;
    q /= n;
    Mat3 scatter = Mat3::Zero();
    for (const auto& sp : voxel.points) {
      const Vec3 d = sp.position - q;
      scatter += d * d.transpose();
    }
    scatter /= n;

    Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
    const Vec3 lambda = eig.eigenvalues();  // ascending
    pl.centroid = q;
    pl.eigenvalues = lambda;
    Vec3 normal = eig.eigenvectors().col(0);
    const double side = normal.dot(q);
    if (side > 0.0) {
      normal = -normal;
    } else if (side == 0.0) {
      if (normal.z() < 0.0 || (normal.z() == 0.0 && (normal.y() < 0.0 ||
          (normal.y() == 0.0 && normal.x() < 0.0)))) {
        normal = -normal;
      }
    }
    pl.normal = normal;

    if (lambda(0) >= lambda_thresh_ || lambda(1) - lambda(0) <= 1e-9) return;

    // First-order covariance of (n, q) against the stored point covariances.
    const Vec3 u2 = eig.eigenvectors().col(1);
    const Vec3 u3 = eig.eigenvectors().col(2);
    const double inv_gap2 = 1.0 / (n * (lambda(0) - lambda(1)));
    const double inv_gap3 = 1.0 / (n * (lambda(0) - lambda(2)));
    Mat3 cov_n = Mat3::Zero();
    Mat3 cov_nq = Mat3::Zero();
    Mat3 cov_q = Mat3::Zero();
    for (const auto& sp : voxel.points) {
      const Vec3 d = sp.position - q;
      const Mat3 dn_dp =
          u2 * (normal.dot(d) * u2.transpose() + u2.dot(d) * normal.transpose()) * inv_gap2 +
          u3 * (normal.dot(d) * u3.transpose() + u3.dot(d) * normal.transpose()) * inv_gap3;
      cov_n += dn_dp * sp.covariance * dn_dp.transpose();
      cov_nq += dn_dp * sp.covariance / n;
      cov_q += sp.covariance / (n * static_cast<double>(n));
    }
    pl.cov_nq.block<3, 3>(0, 0) = cov_n;
    pl.cov_nq.block<3, 3>(0, 3) = cov_nq;
    pl.cov_nq.block<3, 3>(3, 0) = cov_nq.transpose();
    pl.cov_nq.block<3, 3>(3, 3) = cov_q;
    pl.valid = true;
  }

  double d_root_;
  int max_points_;
  int min_points_;
  double lambda_thresh_;
  std::unordered_map<VoxelKey, RootVoxel, VoxelKeyHash> voxels_;
};

/// Range/bearing sensor noise of a LiDAR return: range variance along the
/// ray, angular variance perpendicular, growing with r^2.
inline Mat3 point_covariance_lidar(const Vec3& p_l, double sigma_range, double sigma_bearing) {
  const double r = p_l.norm();
  const Vec3 w = p_l / r;
  const Mat3 along = w * w.transpose();
  return r * r * sigma_bearing * sigma_bearing * (Mat3::Identity() - along) +
         sigma_range * sigma_range * along;
}

}  // namespace salio
