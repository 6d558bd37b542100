#include "priorloc/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "priorloc/cloud_io.hpp"
#include "priorloc/trajectory.hpp"

namespace priorloc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kCovCols = 21;

void write_cov_upper(std::ostream& os, const Cov6& cov) {
  for (int i = 0; i < 6; ++i) {
    for (int j = i; j < 6; ++j) os << " " << cov(i, j);
  }
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(path + ": expected a JSON object");
  return j;
}

Pose pose_from_tum_fields(const std::vector<double>& v) {
  // v = tx ty tz qx qy qz qw
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  q.normalize();
  return Pose(q.toRotationMatrix(), Vec3(v[0], v[1], v[2]));
}

void pose_to_tum_fields(std::ostream& os, const Pose& pose) {
  Eigen::Quaterniond q(pose.R);
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  os << pose.t.x() << " " << pose.t.y() << " " << pose.t.z() << " " << q.x()
     << " " << q.y() << " " << q.z() << " " << q.w();
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw DataError(dir + " is not a directory");

  ds.prior_map = load_cloud((root / "prior_map.pcd").string()).cloud;

  std::ifstream frames(root / "frames.txt");
  if (!frames) throw DataError("cannot open " + (root / "frames.txt").string());
  std::string line;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(frames, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    double t;
    std::string rel;
    if (!(is >> t >> rel)) throw DataError("frames.txt: bad line: " + line);
    if (t <= prev_t) throw DataError("frames.txt: timestamps not monotone");
    prev_t = t;
    ds.frames.emplace_back(t, load_cloud((root / rel).string()).cloud);
  }
  if (ds.frames.empty()) throw DataError("frames.txt lists no frames");

  std::ifstream imu(root / "imu.csv");
  if (!imu) throw DataError("cannot open " + (root / "imu.csv").string());
  std::getline(imu, line);  // header
  if (line.rfind("t,ax,ay,az,wx,wy,wz", 0) != 0) {
    throw DataError("imu.csv: unexpected header: " + line);
  }
  while (std::getline(imu, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ImuSample s;
    char c;
    if (!(is >> s.t >> c >> s.accel.x() >> c >> s.accel.y() >> c >>
          s.accel.z() >> c >> s.gyro.x() >> c >> s.gyro.y() >> c >>
          s.gyro.z())) {
      throw DataError("imu.csv: bad line: " + line);
    }
    ds.imu.push_back(s);
  }

  std::ifstream odom(root / "odom.txt");
  if (!odom) throw DataError("cannot open " + (root / "odom.txt").string());
  while (std::getline(odom, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::vector<double> vals;
    double x;
    while (is >> x) vals.push_back(x);
    if (vals.size() != 8 && vals.size() != 8 + kCovCols) {
      throw DataError("odom.txt: expected 8 or 29 values in line: " + line);
    }
    OdomSample s;
    s.t = vals[0];
    s.pose = pose_from_tum_fields({vals.begin() + 1, vals.begin() + 8});
    if (vals.size() == 8 + kCovCols) {
      int idx = 8;
      for (int i = 0; i < 6; ++i) {
        for (int j = i; j < 6; ++j) {
          s.covariance(i, j) = vals[idx];
          s.covariance(j, i) = vals[idx];
          ++idx;
        }
      }
    }
    ds.odom.push_back(s);
  }
  if (ds.odom.size() != ds.frames.size()) {
    throw DataError("odom.txt: expected one pose per frame");
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& dir,
                  const Trajectory* ground_truth) {
  const fs::path root(dir);
  fs::create_directories(root / "scans");

  save_cloud(dataset.prior_map, (root / "prior_map.pcd").string());

  std::ofstream frames(root / "frames.txt");
  frames << std::setprecision(17);
  for (size_t k = 0; k < dataset.frames.size(); ++k) {
    std::ostringstream name;
    name << "scans/" << std::setw(6) << std::setfill('0') << k << ".pcd";
    save_cloud(dataset.frames[k].second, (root / name.str()).string());
    frames << dataset.frames[k].first << " " << name.str() << "\n";
  }

  std::ofstream imu(root / "imu.csv");
  imu << std::setprecision(17) << "t,ax,ay,az,wx,wy,wz\n";
  for (const ImuSample& s : dataset.imu) {
    imu << s.t << "," << s.accel.x() << "," << s.accel.y() << ","
        << s.accel.z() << "," << s.gyro.x() << "," << s.gyro.y() << ","
        << s.gyro.z() << "\n";
  }

  std::ofstream odom(root / "odom.txt");
  odom << std::setprecision(17);
  for (const OdomSample& s : dataset.odom) {
    odom << s.t << " ";
    pose_to_tum_fields(odom, s.pose);
    write_cov_upper(odom, s.covariance);
    odom << "\n";
  }

  if (ground_truth) {
    save_tum(*ground_truth, (root / "ground_truth.txt").string());
  }
}

RunConfig load_run_config(const std::string& path) {
  const json j = load_json(path);
  RunConfig cfg;
  PipelineConfig& p = cfg.pipeline;

  for (const auto& [key, value] : j.items()) {
    if (key == "dataset") cfg.dataset_dir = value.get<std::string>();
    else if (key == "icp.max_corr_dist") p.icp.max_corr_dist = value;
    else if (key == "icp.max_iterations") p.icp.max_iterations = value;
    else if (key == "icp.rotation_eps") p.icp.rotation_eps = value;
    else if (key == "icp.translation_eps") p.icp.translation_eps = value;
    else if (key == "icp.min_correspondences") p.icp.min_correspondences = value;
    else if (key == "icp.sigma_lidar") p.icp.sigma_lidar = value;
    else if (key == "degeneracy.kappa_threshold") p.icp.degeneracy.kappa_threshold = value;
    else if (key == "degeneracy.kappa_reject") p.icp.degeneracy.kappa_reject = value;
    else if (key == "degeneracy.axis_cos_threshold") p.icp.degeneracy.axis_cos_threshold = value;
    else if (key == "zupt.window_size") p.zupt.window_size = value;
    else if (key == "zupt.eps_accel") p.zupt.eps_accel = value;
    else if (key == "zupt.eps_gyro") p.zupt.eps_gyro = value;
    else if (key == "zupt.eps_trans") p.zupt.eps_trans = value;
    else if (key == "zupt.eps_rot") p.zupt.eps_rot = value;
    else if (key == "zupt.sigma_accel") p.zupt.sigma_accel = value;
    else if (key == "zupt.sigma_nm_rot") p.zupt.sigma_nm_rot = value;
    else if (key == "zupt.sigma_nm_trans") p.zupt.sigma_nm_trans = value;
    else if (key == "eval.max_corr") p.eval.max_corr = value;
    else if (key == "eval.tau") p.eval.tau = value;
    else if (key == "eval.rpe_delta") p.eval.rpe_delta = value;
    else if (key == "eval.assoc_max_dt") p.eval.assoc_max_dt = value;
    else if (key == "eval.align") {
      const std::string s = value;
      if (s == "none") p.eval.align = Alignment::kNone;
      else if (s == "umeyama") p.eval.align = Alignment::kUmeyamaSe3;
      else throw DataError("eval.align: unknown value " + s);
    }
    else if (key == "loop.search_radius") p.loop.search_radius = value;
    else if (key == "loop.min_temporal_gap") p.loop.min_temporal_gap = value;
    else if (key == "loop.fitness_threshold") p.loop.fitness_threshold = value;
    else if (key == "loop.submap_half_width") p.loop.submap_half_width = value;
    else if (key == "optimizer.max_iterations") p.optimizer.max_iterations = value;
    else if (key == "optimizer.step_tol") p.optimizer.step_tol = value;
    else if (key == "optimizer.cost_change_tol") p.optimizer.cost_change_tol = value;
    else if (key == "frame_filter.leaf_size") p.frame_filter.leaf_size = value;
    else if (key == "map_filter.leaf_size") p.map_filter.leaf_size = value;
    else if (key == "map_normal_k") p.map_normal_k = value;
    else if (key == "init_min_overlap") p.init_min_overlap = value;
    else if (key == "keyframe_trans") p.keyframe_trans = value;
    else if (key == "keyframe_rot") p.keyframe_rot = value;
    else if (key == "export_voxel") p.export_voxel = value;
    else if (key == "enable_dm") p.enable_dm = value;
    else if (key == "enable_gf") p.enable_gf = value;
    else if (key == "enable_nm") p.enable_nm = value;
    else if (key == "enable_lc") p.enable_lc = value;
    else if (key == "init_pose") {
      if (value.is_string() && value.get<std::string>() == "auto") {
        p.init_pose.reset();
      } else if (value.is_array() && value.size() == 7) {
        std::vector<double> v = value.get<std::vector<double>>();
        p.init_pose = pose_from_tum_fields(v);
      } else {
        throw DataError("init_pose: expected \"auto\" or 7 numbers");
      }
    }
    else throw DataError("unknown config key: " + key);
  }
  if (cfg.dataset_dir.empty()) throw DataError("config is missing \"dataset\"");
  return cfg;
}

SceneSpec load_scene_spec(const std::string& path) {
  const json j = load_json(path);
  SceneSpec spec;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      const std::string s = value;
      if (s == "room") spec.kind = SceneKind::kRoom;
      else if (s == "corridor") spec.kind = SceneKind::kCorridor;
      else if (s == "parkinglot") spec.kind = SceneKind::kParkingLot;
      else throw DataError("kind: unknown scene " + s);
    }
    else if (key == "dimensions") {
      const std::vector<double> v = value.get<std::vector<double>>();
      if (v.size() != 3) throw DataError("dimensions: expected 3 numbers");
      spec.dimensions = Vec3(v[0], v[1], v[2]);
    }
    else if (key == "num_scans") spec.num_scans = value;
    else if (key == "points_per_scan") spec.points_per_scan = value;
    else if (key == "scan_noise") spec.scan_noise = value;
    else if (key == "scan_range") spec.scan_range = value;
    else if (key == "frame_dt") spec.frame_dt = value;
    else if (key == "speed") spec.speed = value;
    else if (key == "stationary_segments") {
      for (const auto& seg : value) {
        if (!seg.is_array() || seg.size() != 2) {
          throw DataError("stationary_segments: expected [begin, end] pairs");
        }
        spec.stationary_segments.emplace_back(seg[0], seg[1]);
      }
    }
    else if (key == "imu_rate") spec.imu_rate = value;
    else if (key == "imu_accel_noise") spec.imu_accel_noise = value;
    else if (key == "imu_gyro_noise") spec.imu_gyro_noise = value;
    else if (key == "odom_trans_noise") spec.odom_trans_noise = value;
    else if (key == "odom_rot_noise") spec.odom_rot_noise = value;
    else if (key == "odom_drift_rate") spec.odom_drift_rate = value;
    else if (key == "map_points") spec.map_points = value;
    else if (key == "seed") spec.seed = value;
    else throw DataError("unknown scene key: " + key);
  }
  return spec;
}

void write_run_outputs(const PipelineResult& result, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);

  save_tum(result.trajectory, (root / "trajectory.txt").string());

  std::ofstream cov(root / "covariance.csv");
  cov << std::setprecision(17) << "pose_id";
  for (int i = 0; i < 6; ++i) {
    for (int j = i; j < 6; ++j) cov << ",c" << i << j;
  }
  cov << "\n";
  for (size_t k = 0; k < result.marginals.size(); ++k) {
    cov << k;
    for (int i = 0; i < 6; ++i) {
      for (int j = i; j < 6; ++j) cov << "," << result.marginals[k](i, j);
    }
    cov << "\n";
  }

  save_cloud(result.estimated_map, (root / "map.pcd").string());

  std::ofstream reports(root / "frame_reports.jsonl");
  for (const FrameReport& r : result.reports) reports << r.to_json() << "\n";

  std::ofstream graph(root / "graph.jsonl");
  graph << dump_graph(result.graph);
}

}  // namespace priorloc
