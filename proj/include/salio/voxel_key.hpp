#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "salio/geometry.hpp"

namespace salio {

/// Integer voxel index triple; key(p) = floor(p / d) per axis (floor, not
/// truncation, so negative coordinates land in the expected cell).
struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  bool operator==(const VoxelKey&) const = default;
};

inline VoxelKey voxel_key_of(const Vec3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    const std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL ^
                            static_cast<std::uint64_t>(k.y) * 19349669ULL ^
                            static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

}  // namespace salio
