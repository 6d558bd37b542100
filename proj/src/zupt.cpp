#include "priorloc/zupt.hpp"

#include <cmath>

namespace priorloc {

StationaryVerdict detect_stationary(std::span<const ImuSample> window,
                                    const Pose& rel_pose,
                                    const ZuptConfig& cfg) {
  if (static_cast<int>(window.size()) < cfg.window_size) {
    throw ZuptError("insufficient samples: " + std::to_string(window.size()) +
                    " < " + std::to_string(cfg.window_size));
  }
  Vec3 accel_mean = Vec3::Zero();
  Vec3 gyro_mean = Vec3::Zero();
  for (const ImuSample& s : window) {
    accel_mean += s.accel;
    gyro_mean += s.gyro;
  }
  accel_mean /= static_cast<double>(window.size());
  gyro_mean /= static_cast<double>(window.size());

  StationaryVerdict v;
  for (const ImuSample& s : window) {
    v.accel_dev = std::max(v.accel_dev, (s.accel - accel_mean).norm());
    v.gyro_dev = std::max(v.gyro_dev, (s.gyro - gyro_mean).norm());
  }
  v.trans_inc = rel_pose.t.norm();
  v.rot_inc = lie::so3_log(rel_pose.R).norm();

  const bool stage1 = v.accel_dev < cfg.eps_accel && v.gyro_dev < cfg.eps_gyro;
  const bool stage2 = v.trans_inc < cfg.eps_trans && v.rot_inc < cfg.eps_rot;
  v.is_static = stage1 && stage2;
  return v;
}

Vec3 gravity_residual(const Pose& pose, const Vec3& accel_meas,
                      const Vec3& gravity_dir) {
  const double norm = (pose.R * accel_meas).norm();
  if (norm < 0.1 * 9.81) {
    throw ZuptError("invalid accelerometer magnitude: " + std::to_string(norm));
  }
  const Vec3 accel_world = pose.R * accel_meas;
  return accel_world / norm - gravity_dir;
}

Eigen::Matrix<double, 3, 6> gravity_jacobian(const Pose& pose,
                                             const Vec3& accel_meas) {
  const Vec3 accel_world = pose.R * accel_meas;
  const double norm = accel_world.norm();
  if (norm < 0.1 * 9.81) {
    throw ZuptError("invalid accelerometer magnitude: " + std::to_string(norm));
  }
  // d(a^w) = dtheta x a^w, and the radial component of the normalized
  // direction vanishes, leaving d r = -skew(a^w / ||a^w||) dtheta.
  Eigen::Matrix<double, 3, 6> jac = Eigen::Matrix<double, 3, 6>::Zero();
  jac.leftCols<3>() = -lie::skew(accel_world / norm);
  return jac;
}

Mat6 gravity_information(const Eigen::Matrix<double, 3, 6>& jacobian,
                         double sigma_accel) {
  const double w = 1.0 / (sigma_accel * sigma_accel);
  return w * (jacobian.transpose() * jacobian);
}

Twist no_motion_residual(const Pose& current, const Pose& previous) {
  return lie::se3_log(lie::between(current, previous));
}

Mat6 no_motion_information(const ZuptConfig& cfg) {
  Mat6 info = Mat6::Zero();
  const double wr = 1.0 / (cfg.sigma_nm_rot * cfg.sigma_nm_rot);
  const double wt = 1.0 / (cfg.sigma_nm_trans * cfg.sigma_nm_trans);
  info.diagonal() << wr, wr, wr, wt, wt, wt;
  return info;
}

}  // namespace priorloc
