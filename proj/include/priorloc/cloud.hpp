// Point cloud container, voxel downsampling, normal estimation and
// rigid transforms.

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "priorloc/lie.hpp"

namespace priorloc {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;          // empty or same size as points
  std::vector<uint8_t> normal_valid;  // parallel to normals when present
  std::vector<double> timestamps;     // empty or same size as points
  std::vector<double> errors;         // per-point scalar channel (eval export)

  [[nodiscard]] size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
  [[nodiscard]] bool has_normals() const {
    return normals.size() == points.size() && !points.empty();
  }
};

struct VoxelFilterConfig {
  double leaf_size = 0.1;  // meters
};

/// One output point per occupied voxel, at the centroid of its members.
PointCloud voxel_downsample(const PointCloud& cloud,
                            const VoxelFilterConfig& cfg);

/// k-NN PCA normals, sign-oriented toward `viewpoint`. Neighborhoods with
/// rank < 2 get normal_valid = 0 and are skipped by registration.
PointCloud estimate_normals(const PointCloud& cloud, int k,
                            const Vec3& viewpoint = Vec3::Zero());

/// Points mapped by X; normals rotated by X.R only.
PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

}  // namespace priorloc
