// Synthetic scene generator: analytic planar scenes, parametric trajectories
// with stationary segments, ray-free scan sampling, IMU synthesis and
// noisy odometry. Deterministic under a fixed seed.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "priorloc/cloud.hpp"
#include "priorloc/trajectory.hpp"
#include "priorloc/zupt.hpp"

namespace priorloc {

struct OdomSample {
  double t = 0.0;
  Pose pose;
  Cov6 covariance = Cov6::Identity();
};

struct Dataset {
  std::vector<std::pair<double, PointCloud>> frames;  // body-frame scans
  std::vector<ImuSample> imu;
  std::vector<OdomSample> odom;
  PointCloud prior_map;
};

enum class SceneKind { kRoom, kCorridor, kParkingLot };

struct SceneSpec {
  SceneKind kind = SceneKind::kRoom;
  Vec3 dimensions{10.0, 8.0, 3.0};  // m; corridor uses x as the long axis
  int num_scans = 40;
  int points_per_scan = 2000;
  double scan_noise = 0.01;   // m, per-axis Gaussian
  double scan_range = 30.0;   // m
  double frame_dt = 0.1;      // s
  double speed = 1.0;         // m/s along the path
  std::vector<std::pair<double, double>> stationary_segments;  // [begin, end) s
  double imu_rate = 100.0;        // Hz
  double imu_accel_noise = 0.02;  // m/s^2
  double imu_gyro_noise = 0.002;  // rad/s
  double odom_trans_noise = 0.002;  // m per step
  double odom_rot_noise = 0.0005;   // rad per step
  double odom_drift_rate = 0.0;     // m of bias per m traveled
  int map_points = 60000;
  uint64_t seed = 1234;
};

struct Simulation {
  Dataset dataset;
  Trajectory ground_truth;  // one pose per frame
};

Simulation simulate(const SceneSpec& spec);

/// Planar patches of the scene, for tests that want analytic geometry.
struct ScenePatch {
  Vec3 origin;
  Vec3 edge_u;  // full edge vectors; patch = origin + a*u + b*v, a,b in [0,1]
  Vec3 edge_v;
  [[nodiscard]] Vec3 normal() const {
    return edge_u.cross(edge_v).normalized();
  }
  [[nodiscard]] double area() const { return edge_u.cross(edge_v).norm(); }
};

std::vector<ScenePatch> scene_patches(const SceneSpec& spec);

/// Uniform samples over the scene surfaces (the prior map before noise).
PointCloud sample_scene(const SceneSpec& spec, int num_points, uint64_t seed,
                        double noise = 0.0);

}  // namespace priorloc
