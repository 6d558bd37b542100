// Exact nearest-neighbor k-d tree over a point cloud snapshot.
// Rebuilt per cloud; immutable after construction.

#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "priorloc/cloud.hpp"

namespace priorloc {

class SpatialIndex {
 public:
  SpatialIndex() = default;
  explicit SpatialIndex(const PointCloud& cloud);

  /// Closest point within max_dist, or nullopt. Exact.
  [[nodiscard]] std::optional<std::pair<int, double>> nearest(
      const Vec3& query, double max_dist) const;

  /// Indices of the k nearest points (unordered by distance ties).
  [[nodiscard]] std::vector<int> knn(const Vec3& query, int k) const;

  [[nodiscard]] size_t size() const { return points_.size(); }
  [[nodiscard]] bool empty() const { return points_.empty(); }

 private:
  struct Node {
    int point = -1;    // index into points_
    int axis = 0;      // split axis
    int left = -1;     // child node ids
    int right = -1;
  };

  int build(std::vector<int>& ids, int begin, int end);
  void nearest_rec(int node, const Vec3& q, double& best_d2, int& best) const;
  void knn_rec(int node, const Vec3& q, int k,
               std::vector<std::pair<double, int>>& heap) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace priorloc
