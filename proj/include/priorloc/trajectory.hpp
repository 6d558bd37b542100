// Timestamped SE(3) trajectories, TUM-format I/O and rigid alignment.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "priorloc/lie.hpp"

namespace priorloc {

class TrajectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StampedPose {
  double t = 0.0;
  Pose pose;
};

using Trajectory = std::vector<StampedPose>;

/// `t tx ty tz qx qy qz qw` per line; '#' comments skipped.
Trajectory load_tum(const std::string& path);
void save_tum(const Trajectory& traj, const std::string& path);

/// Pairs of indices (est, gt) whose timestamps differ by at most max_dt.
std::vector<std::pair<int, int>> associate(const Trajectory& est,
                                           const Trajectory& gt,
                                           double max_dt = 0.01);

/// Least-squares SE(3) alignment (no scale): pose T minimizing
/// sum ||T est_i - gt_i||^2 over the paired translations.
Pose umeyama_alignment(const std::vector<Vec3>& est,
                       const std::vector<Vec3>& gt);

}  // namespace priorloc
