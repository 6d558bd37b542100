#include "priorloc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace priorloc {
namespace {

constexpr double kGravity = 9.81;

void add_box_walls(std::vector<ScenePatch>& patches, const Vec3& corner,
                   double sx, double sy, double sz) {
  // Four vertical faces of an axis-aligned box (pillar).
  patches.push_back({corner, {sx, 0, 0}, {0, 0, sz}});
  patches.push_back({corner + Vec3(0, sy, 0), {sx, 0, 0}, {0, 0, sz}});
  patches.push_back({corner, {0, sy, 0}, {0, 0, sz}});
  patches.push_back({corner + Vec3(sx, 0, 0), {0, sy, 0}, {0, 0, sz}});
}

std::vector<Vec3> path_waypoints(const SceneSpec& spec) {
  const double lx = spec.dimensions.x();
  const double ly = spec.dimensions.y();
  const double z = 1.2;
  switch (spec.kind) {
    case SceneKind::kRoom:
      // Rectangle loop, 2 m margin.
      return {{2, 2, z},       {lx - 2, 2, z}, {lx - 2, ly - 2, z},
              {2, ly - 2, z},  {2, 2, z}};
    case SceneKind::kCorridor:
      // Out and back along the long axis at mid width.
      return {{2, ly / 2, z}, {lx - 2, ly / 2, z}, {2, ly / 2, z}};
    case SceneKind::kParkingLot:
      return {{2, 2, z}, {lx - 2, ly - 2, z}};
  }
  return {{0, 0, z}};
}

Vec3 position_at(const std::vector<Vec3>& wps, double arc_length) {
  double remaining = arc_length;
  for (size_t i = 0; i + 1 < wps.size(); ++i) {
    const double seg = (wps[i + 1] - wps[i]).norm();
    if (remaining <= seg) {
      return wps[i] + (wps[i + 1] - wps[i]) * (remaining / seg);
    }
    remaining -= seg;
  }
  return wps.back();
}

bool in_stationary_segment(const SceneSpec& spec, double t) {
  for (const auto& [b, e] : spec.stationary_segments) {
    if (t >= b && t < e) return true;
  }
  return false;
}

}  // namespace

std::vector<ScenePatch> scene_patches(const SceneSpec& spec) {
  const double lx = spec.dimensions.x();
  const double ly = spec.dimensions.y();
  const double lz = spec.dimensions.z();
  std::vector<ScenePatch> patches;
  switch (spec.kind) {
    case SceneKind::kRoom:
      patches.push_back({{0, 0, 0}, {lx, 0, 0}, {0, ly, 0}});  // floor
      patches.push_back({{0, 0, 0}, {0, ly, 0}, {0, 0, lz}});  // wall x = 0
      patches.push_back({{0, 0, 0}, {lx, 0, 0}, {0, 0, lz}});  // wall y = 0
      patches.push_back({{0, ly, 0}, {lx, 0, 0}, {0, 0, lz}});  // wall y = ly
      break;
    case SceneKind::kCorridor:
      patches.push_back({{0, 0, 0}, {lx, 0, 0}, {0, ly, 0}});   // floor
      patches.push_back({{0, 0, 0}, {lx, 0, 0}, {0, 0, lz}});   // wall y = 0
      patches.push_back({{0, ly, 0}, {lx, 0, 0}, {0, 0, lz}});  // wall y = ly
      break;
    case SceneKind::kParkingLot: {
      patches.push_back({{0, 0, 0}, {lx, 0, 0}, {0, ly, 0}});  // ground
      // Sparse pillars.
      add_box_walls(patches, {lx * 0.3, ly * 0.3, 0}, 0.4, 0.4, 2.5);
      add_box_walls(patches, {lx * 0.7, ly * 0.6, 0}, 0.4, 0.4, 2.5);
      break;
    }
  }
  return patches;
}

PointCloud sample_scene(const SceneSpec& spec, int num_points, uint64_t seed,
                        double noise) {
  const auto patches = scene_patches(spec);
  double total_area = 0.0;
  for (const auto& p : patches) total_area += p.area();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  PointCloud cloud;
  cloud.points.reserve(num_points);
  for (int i = 0; i < num_points; ++i) {
    double pick = uni(rng) * total_area;
    const ScenePatch* patch = &patches.back();
    for (const auto& p : patches) {
      pick -= p.area();
      if (pick <= 0.0) {
        patch = &p;
        break;
      }
    }
    Vec3 pt = patch->origin + uni(rng) * patch->edge_u + uni(rng) * patch->edge_v;
    if (noise > 0.0) {
      pt += noise * Vec3(gauss(rng), gauss(rng), gauss(rng));
    }
    cloud.points.push_back(pt);
  }
  return cloud;
}

Simulation simulate(const SceneSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto noise3 = [&](double sigma) -> Vec3 {
    return sigma * Vec3(gauss(rng), gauss(rng), gauss(rng));
  };

  Simulation sim;
  sim.dataset.prior_map = sample_scene(spec, spec.map_points, spec.seed ^ 0x9e3779b9);

  // Ground-truth trajectory: arc-length parametrized path, paused inside
  // stationary segments. Yaw follows the path tangent for the room loop.
  const auto wps = path_waypoints(spec);
  const bool yaw_follows = spec.kind == SceneKind::kRoom;
  double arc = 0.0;
  double yaw = 0.0;
  for (int k = 0; k < spec.num_scans; ++k) {
    const double t = k * spec.frame_dt;
    if (k > 0 && !in_stationary_segment(spec, t)) {
      arc += spec.speed * spec.frame_dt;
    }
    const Vec3 pos = position_at(wps, arc);
    if (yaw_follows) {
      const Vec3 ahead = position_at(wps, arc + 0.05);
      const Vec3 dir = ahead - pos;
      if (dir.head<2>().norm() > 1e-9) yaw = std::atan2(dir.y(), dir.x());
    }
    StampedPose sp;
    sp.t = t;
    sp.pose = Pose(lie::so3_exp(Vec3(0, 0, yaw)), pos);
    sim.ground_truth.push_back(sp);
  }

  // Scans: area-uniform surface samples within range, in the body frame.
  for (int k = 0; k < spec.num_scans; ++k) {
    const Pose& gt = sim.ground_truth[k].pose;
    PointCloud world =
        sample_scene(spec, spec.points_per_scan,
                     spec.seed + 7919 * static_cast<uint64_t>(k + 1));
    PointCloud scan;
    scan.points.reserve(world.size());
    for (const Vec3& pw : world.points) {
      if ((pw - gt.t).norm() > spec.scan_range) continue;
      Vec3 pb = gt.R.transpose() * (pw - gt.t);
      if (spec.scan_noise > 0.0) pb += noise3(spec.scan_noise);
      scan.points.push_back(pb);
    }
    sim.dataset.frames.emplace_back(sim.ground_truth[k].t, std::move(scan));
  }

  // IMU: gravity in body frame plus gyro from frame-to-frame rotation.
  const double total_time = (spec.num_scans - 1) * spec.frame_dt;
  const int num_imu = static_cast<int>(total_time * spec.imu_rate) + 1;
  for (int i = 0; i < num_imu; ++i) {
    const double t = i / spec.imu_rate;
    const int k = std::min(static_cast<int>(t / spec.frame_dt),
                           spec.num_scans - 2);
    const Pose& a = sim.ground_truth[k].pose;
    const Pose& b = sim.ground_truth[k + 1].pose;
    ImuSample s;
    s.t = t;
    s.accel = a.R.transpose() * Vec3(0, 0, kGravity) +
              noise3(spec.imu_accel_noise);
    s.gyro = lie::so3_log(a.R.transpose() * b.R) / spec.frame_dt +
             noise3(spec.imu_gyro_noise);
    sim.dataset.imu.push_back(s);
  }

  // Odometry: ground truth corrupted per step, with the injected noise
  // covariance attached. A deterministic drift bias accumulates with
  // distance traveled (model error, deliberately absent from the covariance).
  // Mostly lateral/vertical so a prior map can observe the bulk of the bias
  // even in scenes that leave one translation axis unconstrained.
  const Vec3 drift_dir = Vec3(1, 2, 2).normalized();
  Cov6 step_cov = Cov6::Zero();
  step_cov.diagonal().head<3>().setConstant(
      std::max(spec.odom_rot_noise * spec.odom_rot_noise, 1e-12));
  step_cov.diagonal().tail<3>().setConstant(
      std::max(spec.odom_trans_noise * spec.odom_trans_noise, 1e-12));

  Pose odom_pose = sim.ground_truth.front().pose;
  sim.dataset.odom.push_back({sim.ground_truth.front().t, odom_pose, step_cov});
  for (int k = 1; k < spec.num_scans; ++k) {
    Pose rel = lie::between(sim.ground_truth[k - 1].pose,
                            sim.ground_truth[k].pose);
    const double step_len = rel.t.norm();
    const bool at_rest = step_len < 1e-12;
    const double noise_scale = at_rest ? 0.1 : 1.0;
    if (!at_rest) {
      rel.t += spec.odom_drift_rate * step_len * drift_dir;
    }
    rel.t += noise_scale * noise3(spec.odom_trans_noise);
    rel.R = lie::so3_exp(noise_scale * noise3(spec.odom_rot_noise)) * rel.R;
    odom_pose = lie::compose(odom_pose, rel);
    odom_pose.reorthonormalize();
    sim.dataset.odom.push_back({sim.ground_truth[k].t, odom_pose, step_cov});
  }

  return sim;
}

}  // namespace priorloc
