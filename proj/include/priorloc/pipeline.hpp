// End-to-end localization loop against a prior map: initialization,
// per-keyframe map factors with degeneracy gating, ZUPT factors, loop
// closures and batch graph optimization.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "priorloc/eval.hpp"
#include "priorloc/graph.hpp"
#include "priorloc/icp.hpp"
#include "priorloc/sim.hpp"

namespace priorloc {

struct LoopClosureConfig {
  double search_radius = 5.0;   // m
  int min_temporal_gap = 50;    // keyframes
  double fitness_threshold = 0.5;  // minimum ICP overlap
  int submap_half_width = 5;    // keyframes on each side of the candidate
};

struct PipelineConfig {
  IcpConfig icp;
  ZuptConfig zupt;
  EvalConfig eval;
  LoopClosureConfig loop;
  OptimizeOptions optimizer;
  VoxelFilterConfig frame_filter{0.1};
  VoxelFilterConfig map_filter{0.5};
  int map_normal_k = 20;
  std::optional<Pose> init_pose;  // nullopt: coarse-to-fine auto init
  double init_min_overlap = 0.3;
  double keyframe_trans = 0.5;  // m; 0 = every frame
  double keyframe_rot = 0.2;    // rad
  double export_voxel = 0.1;    // m, estimated-map merge
  bool enable_dm = true;
  bool enable_gf = true;
  bool enable_nm = true;
  bool enable_lc = true;
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameReport {
  int frame_id = -1;
  double t = 0.0;
  bool dm_added = false;
  bool dm_attempted = false;
  bool is_static = false;
  bool nm_added = false;
  bool gf_added = false;
  bool loop_added = false;
  int icp_iterations = 0;
  double icp_rmse = 0.0;
  double icp_overlap = 0.0;
  DegeneracyReport degeneracy;
  std::string note;

  [[nodiscard]] std::string to_json() const;
};

struct PipelineResult {
  Trajectory trajectory;  // one pose per keyframe
  std::vector<Cov6> marginals;
  std::vector<FrameReport> reports;
  PointCloud estimated_map;
  Graph graph;
};

/// Prior map prepared once: downsampled, normals estimated and indexed.
struct PreparedMap {
  PointCloud cloud;
  SpatialIndex index;
};

PreparedMap prepare_map(const PointCloud& raw, const PipelineConfig& cfg);

/// Registers the first scan on the prior map. With init_pose set, a single
/// refinement; otherwise coarse (1 m voxels) then fine. Throws PipelineError
/// with overlap/rmse diagnostics when overlap stays below init_min_overlap.
Pose initialize(const PointCloud& first_scan, const PreparedMap& map,
                const PipelineConfig& cfg);

struct KeyframeHistory {
  std::vector<double> times;
  std::vector<PointCloud> scans;   // downsampled, body frame
  std::vector<Pose> states;        // current estimates
};

/// Radius + temporal-gap candidate search verified by scan-to-submap ICP.
std::optional<Factor> detect_loop(const KeyframeHistory& history, int current,
                                  const PipelineConfig& cfg);

PipelineResult run(const Dataset& dataset, const PipelineConfig& cfg);

}  // namespace priorloc
