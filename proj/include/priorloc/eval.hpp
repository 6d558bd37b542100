// Trajectory metrics (ATE, RPE) and map metrics (accuracy, Chamfer distance)
// with per-point error-map export.

#pragma once

#include <limits>
#include <string>
#include <vector>

#include "priorloc/cloud.hpp"
#include "priorloc/kdtree.hpp"
#include "priorloc/trajectory.hpp"

namespace priorloc {

enum class Alignment { kNone, kUmeyamaSe3 };

struct EvalConfig {
  double max_corr = 0.2;  // m, correspondence cap
  double tau = 0.1;       // m, accuracy inlier threshold
  int rpe_delta = 10;     // frames
  Alignment align = Alignment::kNone;
  double assoc_max_dt = 0.01;  // s
};

inline constexpr double kNoInlierSentinel =
    std::numeric_limits<double>::quiet_NaN();

struct EvalReport {
  double ac = 0.0;            // m; NaN sentinel when no inliers
  double inlier_ratio = 0.0;
  double cd = 0.0;            // m^2
  double ate_rmse = 0.0;      // m
  double rpe_trans = 0.0;     // m
  double rpe_rot = 0.0;       // rad
  std::vector<int> histogram;      // error-distance bins over [0, max_corr]
  std::vector<double> ate_errors;  // per associated pose

  [[nodiscard]] std::string to_json() const;
};

/// Exact nearest-neighbor Euclidean distance min_{m in M} ||p - m||.
double point_to_map_distance(const Vec3& p, const SpatialIndex& map_index);

struct AccuracyResult {
  double ac = 0.0;
  double inlier_ratio = 0.0;
  std::vector<int> histogram;
};

/// Mean point-to-map distance over inliers (d < tau) plus the inlier
/// fraction. ac is the NaN sentinel when no point is within tau.
AccuracyResult accuracy(const PointCloud& cloud, const SpatialIndex& map_index,
                        const EvalConfig& cfg);

/// Symmetric mean squared nearest-neighbor distance; per-point distances are
/// clamped at max_corr before squaring.
double chamfer(const PointCloud& p, const PointCloud& m, const EvalConfig& cfg);

struct AteResult {
  double rmse = 0.0;
  std::vector<double> per_pose_errors;
};

AteResult ate(const Trajectory& est, const Trajectory& gt,
              const EvalConfig& cfg);

struct RpeResult {
  double trans_rmse = 0.0;  // m
  double rot_rmse = 0.0;    // rad
};

RpeResult rpe(const Trajectory& est, const Trajectory& gt,
              const EvalConfig& cfg);

/// Copy of the cloud with per-point distance-to-map in the `error` channel;
/// points beyond max_corr carry the max_corr sentinel value.
PointCloud error_map(const PointCloud& cloud, const SpatialIndex& map_index,
                     const EvalConfig& cfg);

}  // namespace priorloc
