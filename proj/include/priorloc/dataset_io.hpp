// On-disk dataset layout, flat JSON config parsing and run-output writers.
//
// Dataset directory:
//   prior_map.pcd            prior map (PCD or PLY, any supported format)
//   frames.txt               lines `t <relative scan path>`
//   scans/NNNNNN.pcd         per-frame body-frame scans
//   imu.csv                  header `t,ax,ay,az,wx,wy,wz`
//   odom.txt                 TUM poses plus optional 21 covariance columns
//                            (upper triangle of the 6x6, row major)

#pragma once

#include <stdexcept>
#include <string>

#include "priorloc/pipeline.hpp"
#include "priorloc/sim.hpp"

namespace priorloc {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Dataset load_dataset(const std::string& dir);

/// Writes the dataset layout above; ground truth, when given, lands in
/// ground_truth.txt (TUM).
void save_dataset(const Dataset& dataset, const std::string& dir,
                  const Trajectory* ground_truth = nullptr);

struct RunConfig {
  std::string dataset_dir;
  PipelineConfig pipeline;
};

/// Flat JSON schema, one key per module field (dotted names, e.g.
/// "icp.sigma_lidar"). Unknown keys are an error; missing keys keep defaults.
RunConfig load_run_config(const std::string& path);

SceneSpec load_scene_spec(const std::string& path);

/// trajectory.txt (TUM), covariance.csv (pose id + 21 upper-triangular
/// values), map.pcd, frame_reports.jsonl, graph.jsonl.
void write_run_outputs(const PipelineResult& result, const std::string& dir);

}  // namespace priorloc
