#include "priorloc/cloud.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "priorloc/kdtree.hpp"

namespace priorloc {
namespace {

// 21 bits per axis, offset to keep indices positive for |coord/leaf| < 2^20.
uint64_t voxel_key(const Vec3& p, double leaf) {
  const auto idx = [&](double v) {
    return static_cast<uint64_t>(
        static_cast<int64_t>(std::floor(v / leaf)) + (1 << 20));
  };
  return (idx(p.x()) << 42) | (idx(p.y()) << 21) | idx(p.z());
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud,
                            const VoxelFilterConfig& cfg) {
  struct Accum {
    Vec3 sum = Vec3::Zero();
    int count = 0;
    int order = 0;  // first-seen order, for deterministic output
  };
  std::unordered_map<uint64_t, Accum> voxels;
  voxels.reserve(cloud.size());
  int next_order = 0;
  for (const Vec3& p : cloud.points) {
    Accum& a = voxels[voxel_key(p, cfg.leaf_size)];
    if (a.count == 0) a.order = next_order++;
    a.sum += p;
    ++a.count;
  }
  PointCloud out;
  out.points.resize(voxels.size());
  for (const auto& [key, a] : voxels) {
    out.points[a.order] = a.sum / a.count;
  }
  return out;
}

PointCloud estimate_normals(const PointCloud& cloud, int k,
                            const Vec3& viewpoint) {
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Vec3::UnitZ());
  out.normal_valid.assign(cloud.size(), 0);
  if (static_cast<int>(cloud.size()) < k || k < 3) return out;

  SpatialIndex index(cloud);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const std::vector<int> nn = index.knn(cloud.points[i], k);
    Vec3 mean = Vec3::Zero();
    for (int id : nn) mean += cloud.points[id];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (int id : nn) {
      const Vec3 d = cloud.points[id] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 evals = eig.eigenvalues();  // ascending
    // Rank < 2 neighborhood: the two largest eigenvalues must dominate.
    if (evals(1) < 1e-12 * std::max(evals(2), 1e-300) || evals(2) <= 0.0) {
      continue;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    if (n.dot(viewpoint - cloud.points[i]) < 0.0) n = -n;
    out.normals[i] = n;
    out.normal_valid[i] = 1;
  }
  return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = pose.apply(p);
  for (Vec3& n : out.normals) n = pose.R * n;
  return out;
}

}  // namespace priorloc
