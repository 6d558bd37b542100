#include "priorloc/kdtree.hpp"

#include <algorithm>
#include <limits>

namespace priorloc {

SpatialIndex::SpatialIndex(const PointCloud& cloud) : points_(cloud.points) {
  if (points_.empty()) return;
  std::vector<int> ids(points_.size());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  nodes_.reserve(points_.size());
  root_ = build(ids, 0, static_cast<int>(ids.size()));
}

int SpatialIndex::build(std::vector<int>& ids, int begin, int end) {
  if (begin >= end) return -1;
  // Split along the axis of largest extent.
  Vec3 lo = points_[ids[begin]];
  Vec3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[ids[i]]);
    hi = hi.cwiseMax(points_[ids[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  std::nth_element(ids.begin() + begin, ids.begin() + mid, ids.begin() + end,
                   [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis])
                       return points_[a][axis] < points_[b][axis];
                     return a < b;  // deterministic tie-break
                   });

  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{ids[mid], axis, -1, -1});
  const int left = build(ids, begin, mid);
  const int right = build(ids, mid + 1, end);
  nodes_[node_id].left = left;
  nodes_[node_id].right = right;
  return node_id;
}

void SpatialIndex::nearest_rec(int node, const Vec3& q, double& best_d2,
                               int& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && best >= 0 && n.point < best)) {
    best_d2 = d2;
    best = n.point;
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  nearest_rec(near, q, best_d2, best);
  if (diff * diff <= best_d2) nearest_rec(far, q, best_d2, best);
}

std::optional<std::pair<int, double>> SpatialIndex::nearest(
    const Vec3& query, double max_dist) const {
  if (root_ < 0 || max_dist < 0.0) return std::nullopt;
  double best_d2 = max_dist * max_dist;
  // Inclusive bound: a point exactly at max_dist qualifies.
  best_d2 = std::nextafter(best_d2, std::numeric_limits<double>::infinity());
  int best = -1;
  nearest_rec(root_, query, best_d2, best);
  if (best < 0) return std::nullopt;
  return std::make_pair(best, (points_[best] - query).norm());
}

void SpatialIndex::knn_rec(int node, const Vec3& q, int k,
                           std::vector<std::pair<double, int>>& heap) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d2 = (p - q).squaredNorm();
  if (static_cast<int>(heap.size()) < k) {
    heap.emplace_back(d2, n.point);
    std::push_heap(heap.begin(), heap.end());
  } else if (d2 < heap.front().first) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = {d2, n.point};
    std::push_heap(heap.begin(), heap.end());
  }
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  knn_rec(near, q, k, heap);
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().first) {
    knn_rec(far, q, k, heap);
  }
}

std::vector<int> SpatialIndex::knn(const Vec3& query, int k) const {
  std::vector<std::pair<double, int>> heap;
  heap.reserve(static_cast<size_t>(k) + 1);
  knn_rec(root_, query, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<int> out;
  out.reserve(heap.size());
  for (const auto& [d2, id] : heap) out.push_back(id);
  return out;
}

}  // namespace priorloc
