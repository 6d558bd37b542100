#include "priorloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace priorloc {
namespace {

Mat6 invert_covariance(const Cov6& cov) {
  const double ridge = std::max(1e-12, 1e-9 * cov.trace() / 6.0);
  const Cov6 damped = cov + ridge * Mat6::Identity();
  Mat6 info = damped.ldlt().solve(Mat6::Identity());
  return 0.5 * (info + info.transpose());
}

PointCloud concat(const PointCloud& a, const PointCloud& b) {
  PointCloud out = a;
  out.normals.clear();
  out.normal_valid.clear();
  out.timestamps.clear();
  out.errors.clear();
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  return out;
}

}  // namespace

PreparedMap prepare_map(const PointCloud& raw, const PipelineConfig& cfg) {
  PreparedMap map;
  map.cloud = voxel_downsample(raw, cfg.map_filter);
  map.cloud = estimate_normals(map.cloud, cfg.map_normal_k);
  map.index = SpatialIndex(map.cloud);
  return map;
}

Pose initialize(const PointCloud& first_scan, const PreparedMap& map,
                const PipelineConfig& cfg) {
  IcpConfig fine = cfg.icp;

  if (cfg.init_pose) {
    RegistrationResult result;
    try {
      result = register_scan(first_scan, map.cloud, map.index, *cfg.init_pose,
                             fine);
    } catch (const IcpError& e) {
      throw PipelineError(std::string("initialization failed: ") + e.what());
    }
    if (result.overlap < cfg.init_min_overlap) {
      std::ostringstream os;
      os << "initialization failed: overlap " << result.overlap << ", rmse "
         << result.rmse;
      throw PipelineError(os.str());
    }
    return result.pose;
  }

  // Coarse-to-fine: 1 m voxels, wide correspondence gate, a small grid of
  // seed poses (identity and map-centroid placements at four yaws).
  VoxelFilterConfig coarse_leaf{1.0};
  PointCloud coarse_scan = voxel_downsample(first_scan, coarse_leaf);
  PointCloud coarse_map = voxel_downsample(map.cloud, coarse_leaf);
  coarse_map = estimate_normals(coarse_map, std::min<int>(10, static_cast<int>(coarse_map.size())));
  const SpatialIndex coarse_index(coarse_map);

  IcpConfig coarse_cfg = cfg.icp;
  coarse_cfg.max_corr_dist = 1.5;
  coarse_cfg.min_correspondences =
      std::min(cfg.icp.min_correspondences, 20);
  coarse_cfg.max_iterations = 20;

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : map.cloud.points) centroid += p;
  if (!map.cloud.empty()) centroid /= static_cast<double>(map.cloud.size());

  std::vector<Pose> seeds;
  for (int q = 0; q < 4; ++q) {
    const Mat3 yaw = lie::so3_exp(Vec3(0, 0, q * M_PI / 2));
    seeds.emplace_back(yaw, Vec3::Zero());
    seeds.emplace_back(yaw, centroid);
  }

  bool have_best = false;
  RegistrationResult best;
  for (const Pose& seed : seeds) {
    try {
      const auto r = register_scan(coarse_scan, coarse_map, coarse_index,
                                   seed, coarse_cfg);
      if (!have_best || r.overlap > best.overlap ||
          (r.overlap == best.overlap && r.rmse < best.rmse)) {
        best = r;
        have_best = true;
      }
    } catch (const IcpError&) {
      continue;
    }
  }
  if (!have_best) {
    throw PipelineError("initialization failed: no coarse seed matched");
  }

  RegistrationResult fine_result;
  try {
    fine_result =
        register_scan(first_scan, map.cloud, map.index, best.pose, fine);
  } catch (const IcpError& e) {
    throw PipelineError(std::string("initialization failed: ") + e.what());
  }
  if (fine_result.overlap < cfg.init_min_overlap || !fine_result.converged) {
    std::ostringstream os;
    os << "initialization failed: overlap " << fine_result.overlap
       << ", rmse " << fine_result.rmse;
    throw PipelineError(os.str());
  }
  return fine_result.pose;
}

std::optional<Factor> detect_loop(const KeyframeHistory& history, int current,
                                  const PipelineConfig& cfg) {
  const int latest_candidate = current - cfg.loop.min_temporal_gap;
  if (latest_candidate < 0) return std::nullopt;

  int best = -1;
  double best_dist = cfg.loop.search_radius;
  for (int j = 0; j <= latest_candidate; ++j) {
    const double d = (history.states[j].t - history.states[current].t).norm();
    if (d <= best_dist) {
      best_dist = d;
      best = j;
    }
  }
  if (best < 0) return std::nullopt;

  // Local submap around the candidate at current estimates.
  PointCloud submap;
  const int lo = std::max(0, best - cfg.loop.submap_half_width);
  const int hi = std::min(latest_candidate, best + cfg.loop.submap_half_width);
  for (int j = lo; j <= hi; ++j) {
    submap = concat(submap, transform_cloud(history.scans[j], history.states[j]));
  }
  submap = voxel_downsample(submap, cfg.frame_filter);
  if (static_cast<int>(submap.size()) < cfg.map_normal_k) return std::nullopt;
  submap = estimate_normals(submap, cfg.map_normal_k);
  const SpatialIndex submap_index(submap);

  try {
    const auto result =
        register_scan(history.scans[current], submap, submap_index,
                      history.states[current], cfg.icp);
    if (!result.converged || result.overlap < cfg.loop.fitness_threshold ||
        !result.degeneracy.accepted) {
      return std::nullopt;
    }
    const Pose rel = lie::between(history.states[best], result.pose);
    return Factor::LoopClosure(best, current, rel,
                               invert_covariance(result.covariance));
  } catch (const IcpError&) {
    return std::nullopt;
  }
}

PipelineResult run(const Dataset& dataset, const PipelineConfig& cfg) {
  if (dataset.frames.empty()) throw PipelineError("dataset has no frames");
  if (dataset.odom.size() != dataset.frames.size()) {
    throw PipelineError("odometry stream must align with frames");
  }

  PreparedMap map;
  const bool need_map = cfg.enable_dm;
  if (need_map) {
    if (dataset.prior_map.empty()) throw PipelineError("missing prior map");
    map = prepare_map(dataset.prior_map, cfg);
  }

  PipelineResult result;
  Graph& graph = result.graph;
  KeyframeHistory history;
  std::vector<int> keyframe_frame_ids;

  int last_kf_frame = -1;
  for (int frame = 0; frame < static_cast<int>(dataset.frames.size()); ++frame) {
    const double t = dataset.frames[frame].first;
    const Pose& odom_pose = dataset.odom[frame].pose;

    // Keyframe gating on odometry motion.
    if (last_kf_frame >= 0) {
      const Pose rel =
          lie::between(dataset.odom[last_kf_frame].pose, odom_pose);
      const double dt_trans = rel.t.norm();
      const double dt_rot = lie::so3_log(rel.R).norm();
      // Keep the full frame rate through near-stationary stretches so the
      // ZUPT factors see consecutive resting poses; gate on the single-frame
      // increment, not the distance since the last keyframe.
      const Pose frame_rel =
          lie::between(dataset.odom[frame - 1].pose, odom_pose);
      const bool maybe_static =
          (cfg.enable_nm || cfg.enable_gf) &&
          frame_rel.t.norm() < cfg.zupt.eps_trans &&
          lie::so3_log(frame_rel.R).norm() < cfg.zupt.eps_rot;
      if (dt_trans < cfg.keyframe_trans && dt_rot < cfg.keyframe_rot &&
          !maybe_static) {
        continue;
      }
    }

    FrameReport report;
    report.frame_id = frame;
    report.t = t;

    PointCloud scan = voxel_downsample(dataset.frames[frame].second,
                                       cfg.frame_filter);
    const int p = static_cast<int>(graph.states.size());

    if (p == 0) {
      Pose first_state = odom_pose;
      if (cfg.enable_dm) {
        first_state = initialize(scan, map, cfg);
      }
      graph.add_state(first_state);
    } else {
      const int prev_frame = last_kf_frame;
      const Pose rel =
          lie::between(dataset.odom[prev_frame].pose, odom_pose);
      const Pose predicted = lie::compose(graph.states[p - 1], rel);
      graph.add_state(predicted);

      const Cov6 rel_cov = propagate_odom_covariance(
          dataset.odom[prev_frame].covariance, dataset.odom[frame].covariance,
          rel);
      graph.add_factor(
          Factor::Odometry(p - 1, p, rel, invert_covariance(rel_cov)));

      // ZUPT: stage 1 on the trailing IMU window, stage 2 on the odometry
      // increment since the previous keyframe.
      if (cfg.enable_nm || cfg.enable_gf) {
        std::vector<ImuSample> window;
        for (auto it = dataset.imu.rbegin(); it != dataset.imu.rend(); ++it) {
          if (it->t <= t) window.push_back(*it);
          if (static_cast<int>(window.size()) >= cfg.zupt.window_size) break;
        }
        std::reverse(window.begin(), window.end());
        if (static_cast<int>(window.size()) >= cfg.zupt.window_size) {
          const auto verdict = detect_stationary(window, rel, cfg.zupt);
          report.is_static = verdict.is_static;
          if (verdict.is_static) {
            if (cfg.enable_nm) {
              graph.add_factor(
                  Factor::NoMotion(p, p - 1, no_motion_information(cfg.zupt)));
              report.nm_added = true;
            }
            if (cfg.enable_gf) {
              Vec3 mean_accel = Vec3::Zero();
              for (const ImuSample& s : window) mean_accel += s.accel;
              mean_accel /= static_cast<double>(window.size());
              if (mean_accel.norm() > 0.1 * 9.81) {
                graph.add_factor(Factor::Gravity(p, mean_accel,
                                                 cfg.zupt.gravity_dir,
                                                 cfg.zupt.sigma_accel));
                report.gf_added = true;
              }
            }
          }
        }
      }
    }

    // Map factor, gated by the degeneracy report.
    if (cfg.enable_dm) {
      report.dm_attempted = true;
      try {
        const auto reg = register_scan(scan, map.cloud, map.index,
                                       graph.states[p], cfg.icp);
        report.icp_iterations = reg.iterations;
        report.icp_rmse = reg.rmse;
        report.icp_overlap = reg.overlap;
        report.degeneracy = reg.degeneracy;
        if (reg.degeneracy.accepted) {
          graph.add_factor(Factor::Map(p, reg.pose,
                                       invert_covariance(reg.covariance)));
          report.dm_added = true;
        } else {
          report.note = "map factor rejected by degeneracy gate";
        }
      } catch (const IcpError& e) {
        report.note = std::string("registration failed: ") + e.what();
      }
    }

    history.times.push_back(t);
    history.scans.push_back(scan);
    history.states = graph.states;
    keyframe_frame_ids.push_back(frame);

    if (cfg.enable_lc && p > 0) {
      if (auto loop = detect_loop(history, p, cfg)) {
        graph.add_factor(*loop);
        report.loop_added = true;
      }
    }

    // Frame-wise warm-started batch re-optimization.
    OptimizeOptions opts = cfg.optimizer;
    opts.compute_marginals = false;
    const auto opt = optimize(graph, opts);
    graph.states = opt.states;
    history.states = graph.states;

    result.reports.push_back(report);
    last_kf_frame = frame;
  }

  // Final pass with marginal recovery.
  OptimizeOptions final_opts = cfg.optimizer;
  final_opts.compute_marginals = true;
  const auto final_opt = optimize(graph, final_opts);
  graph.states = final_opt.states;
  result.marginals = final_opt.marginals;

  for (size_t k = 0; k < graph.states.size(); ++k) {
    result.trajectory.push_back(
        {history.times[k], graph.states[k]});
  }

  PointCloud merged;
  for (size_t k = 0; k < graph.states.size(); ++k) {
    merged = concat(merged, transform_cloud(history.scans[k], graph.states[k]));
  }
  VoxelFilterConfig merge_leaf{cfg.export_voxel};
  result.estimated_map = voxel_downsample(merged, merge_leaf);
  return result;
}

std::string FrameReport::to_json() const {
  std::ostringstream os;
  os.precision(12);
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << "{\"frame_id\":" << frame_id << ",\"t\":" << t
     << ",\"dm_attempted\":" << b(dm_attempted)
     << ",\"dm_added\":" << b(dm_added) << ",\"is_static\":" << b(is_static)
     << ",\"nm_added\":" << b(nm_added) << ",\"gf_added\":" << b(gf_added)
     << ",\"loop_added\":" << b(loop_added)
     << ",\"icp_iterations\":" << icp_iterations
     << ",\"icp_rmse\":" << icp_rmse << ",\"icp_overlap\":" << icp_overlap
     << ",\"degeneracy\":" << degeneracy.to_json() << ",\"note\":\"" << note
     << "\"}";
  return os.str();
}

}  // namespace priorloc
