#include "priorloc/icp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace priorloc {

std::vector<Correspondence> find_correspondences(const PointCloud& scan,
                                                 const PointCloud& map,
                                                 const SpatialIndex& map_index,
                                                 const Pose& pose,
                                                 const IcpConfig& cfg) {
  if (!map.has_normals()) {
    throw IcpError("map cloud has no normals");
  }
  std::vector<Correspondence> corrs;
  corrs.reserve(scan.size());
  for (size_t i = 0; i < scan.size(); ++i) {
    const Vec3 p = pose.apply(scan.points[i]);
    const auto hit = map_index.nearest(p, cfg.max_corr_dist);
    if (!hit) continue;
    const int j = hit->first;
    if (!map.normal_valid.empty() && !map.normal_valid[j]) continue;
    Correspondence c;
    c.source_id = static_cast<int>(i);
    c.target_id = j;
    c.normal = map.normals[j];
    c.residual = (p - map.points[j]).dot(c.normal);
    corrs.push_back(c);
  }
  if (static_cast<int>(corrs.size()) < cfg.min_correspondences) {
    throw IcpError("insufficient overlap: " + std::to_string(corrs.size()) +
                   " correspondences, need " +
                   std::to_string(cfg.min_correspondences));
  }
  return corrs;
}

LinearSystem build_linear_system(const std::vector<Correspondence>& corrs,
                                 const PointCloud& scan, const PointCloud& map,
                                 const Pose& pose, const IcpConfig& cfg) {
  LinearSystem sys;
  const Eigen::Index n = static_cast<Eigen::Index>(corrs.size());
  sys.jacobian.resize(n, 6);
  sys.residuals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Correspondence& c = corrs[i];
    const Vec3 pw = pose.apply(scan.points[c.source_id]);
    const Vec3& q = map.points[c.target_id];
    const Vec3& nrm = c.normal;
    sys.residuals(i) = (pw - q).dot(nrm);
    sys.jacobian.block<1, 3>(i, 0) = pw.cross(nrm).transpose();
    sys.jacobian.block<1, 3>(i, 3) = nrm.transpose();
  }
  const double w = cfg.weight();
  sys.hessian = w * (sys.jacobian.transpose() * sys.jacobian);
  sys.gradient = -w * (sys.jacobian.transpose() * sys.residuals);
  return sys;
}

Twist solve_update(const Mat6& hessian, const Vec6& gradient) {
  const double lambda = 1e-6 * hessian.trace() / 6.0;
  const Mat6 damped = hessian + lambda * Mat6::Identity();
  Eigen::LDLT<Mat6> ldlt(damped);
  if (ldlt.info() != Eigen::Success) {
    throw IcpError("degenerate system: Hessian not factorizable");
  }
  const Twist delta = ldlt.solve(gradient);
  if (!delta.allFinite()) {
    throw IcpError("degenerate system: non-finite update");
  }
  return delta;
}

namespace {

// Damped inverse; flagged singular directions of each block are inflated
// by max(1, kappa / kappa_threshold).
Cov6 covariance_from_hessian(const Mat6& hessian,
                             const DegeneracyReport& report,
                             const DegeneracyConfig& cfg) {
  const double lambda = std::max(1e-9 * hessian.trace() / 6.0, 1e-12);
  const Mat6 damped = hessian + lambda * Mat6::Identity();
  Cov6 cov = damped.ldlt().solve(Mat6::Identity());
  cov = 0.5 * (cov + cov.transpose());

  bool any_flagged = false;
  for (bool f : report.degenerate_axes) any_flagged |= f;
  if (!any_flagged) return cov;

  Mat6 inflate = Mat6::Identity();
  const auto inflate_block = [&](double kappa, const Vec3& sv, const Mat3& u,
                                 int offset) {
    if (!(kappa > cfg.kappa_threshold)) return;
    const double factor =
        std::isinf(kappa) ? cfg.kappa_reject / cfg.kappa_threshold
                          : std::max(1.0, kappa / cfg.kappa_threshold);
    Mat3 scale = Mat3::Identity();
    for (int j = 0; j < 3; ++j) {
      const bool weak = sv(j) <= 0.0 || sv(0) / sv(j) > cfg.kappa_threshold;
      if (weak) {
        scale += (std::sqrt(factor) - 1.0) * u.col(j) * u.col(j).transpose();
      }
    }
    inflate.block<3, 3>(offset, offset) = scale;
  };
  inflate_block(report.kappa_rot, report.sv_rot, report.u_rot, 0);
  inflate_block(report.kappa_trans, report.sv_trans, report.u_trans, 3);
  cov = inflate * cov * inflate.transpose();
  return 0.5 * (cov + cov.transpose());
}

double rmse_of(const Eigen::VectorXd& residuals) {
  if (residuals.size() == 0) return 0.0;
  return std::sqrt(residuals.squaredNorm() /
                   static_cast<double>(residuals.size()));
}

}  // namespace

RegistrationResult register_scan(const PointCloud& scan, const PointCloud& map,
                                 const SpatialIndex& map_index,
                                 const Pose& initial_guess,
                                 const IcpConfig& cfg) {
  RegistrationResult result;
  result.pose = initial_guess;

  double prev_rmse = -1.0;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const auto corrs =
        find_correspondences(scan, map, map_index, result.pose, cfg);
    const LinearSystem sys =
        build_linear_system(corrs, scan, map, result.pose, cfg);

    if (iter == 0) {
      result.degeneracy = assess(sys.hessian, sys.jacobian, sys.residuals,
                                 cfg.degeneracy, /*converged=*/true);
    }

    result.hessian = sys.hessian;
    result.rmse = rmse_of(sys.residuals);
    result.overlap =
        scan.empty() ? 0.0
                     : static_cast<double>(corrs.size()) /
                           static_cast<double>(scan.size());
    result.iterations = iter + 1;

    const Twist delta = solve_update(sys.hessian, sys.gradient);
    result.pose = lie::retract(delta, result.pose);
    result.pose.reorthonormalize();

    const double dtheta = delta.head<3>().norm();
    const double dt = delta.tail<3>().norm();
    const bool small_step = dtheta < cfg.rotation_eps && dt < cfg.translation_eps;
    const bool rmse_stalled =
        prev_rmse >= 0.0 && std::abs(prev_rmse - result.rmse) < 1e-8;
    prev_rmse = result.rmse;
    if (small_step || rmse_stalled) {
      result.converged = true;
      break;
    }
  }

  // Final statistics at the converged pose.
  const auto corrs =
      find_correspondences(scan, map, map_index, result.pose, cfg);
  const LinearSystem sys =
      build_linear_system(corrs, scan, map, result.pose, cfg);
  result.hessian = sys.hessian;
  result.rmse = rmse_of(sys.residuals);
  result.overlap = scan.empty()
                       ? 0.0
                       : static_cast<double>(corrs.size()) /
                             static_cast<double>(scan.size());
  result.degeneracy.accepted =
      result.converged &&
      result.degeneracy.kappa_rot < cfg.degeneracy.kappa_reject &&
      result.degeneracy.kappa_trans < cfg.degeneracy.kappa_reject;
  result.covariance =
      covariance_from_hessian(result.hessian, result.degeneracy,
                              cfg.degeneracy);
  return result;
}

}  // namespace priorloc
