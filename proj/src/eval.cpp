#include "priorloc/eval.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace priorloc {

double point_to_map_distance(const Vec3& p, const SpatialIndex& map_index) {
  const auto hit =
      map_index.nearest(p, std::numeric_limits<double>::infinity());
  if (!hit) throw std::runtime_error("point_to_map_distance: empty map");
  return hit->second;
}

AccuracyResult accuracy(const PointCloud& cloud, const SpatialIndex& map_index,
                        const EvalConfig& cfg) {
  AccuracyResult res;
  res.histogram.assign(20, 0);
  double sum = 0.0;
  int inliers = 0;
  for (const Vec3& p : cloud.points) {
    const double d = point_to_map_distance(p, map_index);
    if (d < cfg.tau) {
      sum += d;
      ++inliers;
    }
    const int bin = std::min(
        19, static_cast<int>(std::floor(d / cfg.max_corr * 20.0)));
    ++res.histogram[std::max(0, bin)];
  }
  res.inlier_ratio =
      cloud.empty() ? 0.0
                    : static_cast<double>(inliers) /
                          static_cast<double>(cloud.size());
  res.ac = inliers > 0 ? sum / inliers : kNoInlierSentinel;
  return res;
}

double chamfer(const PointCloud& p, const PointCloud& m,
               const EvalConfig& cfg) {
  if (p.empty() || m.empty()) {
    throw std::runtime_error("chamfer: empty cloud");
  }
  const auto one_sided = [&](const PointCloud& from, const PointCloud& to) {
    const SpatialIndex index(to);
    double sum = 0.0;
    for (const Vec3& q : from.points) {
      const double d = std::min(point_to_map_distance(q, index), cfg.max_corr);
      sum += d * d;
    }
    return sum / (2.0 * static_cast<double>(from.size()));
  };
  // Term order fixed by cloud identity, not argument order, so
  // chamfer(P, M) == chamfer(M, P) bit-exactly.
  if (p.size() < m.size() ||
      (p.size() == m.size() && p.points.front().x() <= m.points.front().x())) {
    return one_sided(p, m) + one_sided(m, p);
  }
  return one_sided(m, p) + one_sided(p, m);
}

AteResult ate(const Trajectory& est, const Trajectory& gt,
              const EvalConfig& cfg) {
  const auto pairs = associate(est, gt, cfg.assoc_max_dt);
  if (pairs.size() < 2) {
    throw std::runtime_error("ate: fewer than 2 associated poses");
  }
  std::vector<Vec3> pe, pg;
  pe.reserve(pairs.size());
  pg.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    pe.push_back(est[i].pose.t);
    pg.push_back(gt[j].pose.t);
  }
  Pose align = Pose::Identity();
  if (cfg.align == Alignment::kUmeyamaSe3) {
    align = umeyama_alignment(pe, pg);
  }
  AteResult res;
  double sum_sq = 0.0;
  for (size_t k = 0; k < pairs.size(); ++k) {
    const double e = (align.apply(pe[k]) - pg[k]).norm();
    res.per_pose_errors.push_back(e);
    sum_sq += e * e;
  }
  res.rmse = std::sqrt(sum_sq / static_cast<double>(pairs.size()));
  return res;
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt,
              const EvalConfig& cfg) {
  const auto pairs = associate(est, gt, cfg.assoc_max_dt);
  if (static_cast<int>(pairs.size()) < cfg.rpe_delta + 1) {
    throw std::runtime_error("rpe: too few associated poses for the delta");
  }
  double sum_t = 0.0, sum_r = 0.0;
  int count = 0;
  for (size_t k = 0; k + cfg.rpe_delta < pairs.size(); ++k) {
    const auto& [i0, j0] = pairs[k];
    const auto& [i1, j1] = pairs[k + cfg.rpe_delta];
    const Pose rel_gt = lie::between(gt[j0].pose, gt[j1].pose);
    const Pose rel_est = lie::between(est[i0].pose, est[i1].pose);
    const Pose err = lie::between(rel_gt, rel_est);
    sum_t += err.t.squaredNorm();
    const double angle = lie::so3_log(err.R).norm();
    sum_r += angle * angle;
    ++count;
  }
  RpeResult res;
  res.trans_rmse = std::sqrt(sum_t / count);
  res.rot_rmse = std::sqrt(sum_r / count);
  return res;
}

PointCloud error_map(const PointCloud& cloud, const SpatialIndex& map_index,
                     const EvalConfig& cfg) {
  PointCloud out = cloud;
  out.errors.resize(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const double d = point_to_map_distance(cloud.points[i], map_index);
    out.errors[i] = d > cfg.max_corr ? cfg.max_corr : d;
  }
  return out;
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os.precision(12);
  const auto num = [](double v) {
    std::ostringstream s;
    s.precision(12);
    if (std::isnan(v)) {
      s << "null";
    } else {
      s << v;
    }
    return s.str();
  };
  os << "{\"ac\":" << num(ac) << ",\"inlier_ratio\":" << num(inlier_ratio)
     << ",\"cd\":" << num(cd) << ",\"ate_rmse\":" << num(ate_rmse)
     << ",\"rpe_trans\":" << num(rpe_trans) << ",\"rpe_rot\":" << num(rpe_rot)
     << ",\"histogram\":[";
  for (size_t i = 0; i < histogram.size(); ++i) {
    os << (i ? "," : "") << histogram[i];
  }
  os << "]}";
  return os.str();
}

}  // namespace priorloc
