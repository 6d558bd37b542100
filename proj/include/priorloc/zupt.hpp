// Two-stage stationary detection from IMU windows and odometry increments,
// plus the gravity and no-motion constraints used during stationary periods.

#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "priorloc/lie.hpp"

namespace priorloc {

struct ImuSample {
  double t = 0.0;             // s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force in body frame
  Vec3 gyro = Vec3::Zero();   // rad/s
};

struct ZuptConfig {
  int window_size = 50;
  double eps_accel = 0.15;       // m/s^2
  double eps_gyro = 0.01;        // rad/s
  double eps_trans = 0.005;      // m
  double eps_rot = 0.005;        // rad
  Vec3 gravity_dir = Vec3::UnitZ();  // unit, world frame
  double sigma_accel = 0.05;     // m/s^2, gravity factor weight
  double sigma_nm_rot = 1e-3;    // rad, no-motion factor noise
  double sigma_nm_trans = 1e-3;  // m
};

struct StationaryVerdict {
  bool is_static = false;
  double accel_dev = 0.0;  // max ||a_i - mean||
  double gyro_dev = 0.0;   // max ||w_i - mean||
  double trans_inc = 0.0;  // ||t|| of the odometry increment
  double rot_inc = 0.0;    // rotation angle of the odometry increment
};

class ZuptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stage 1 gates on IMU deviations, stage 2 on the odometry increment;
/// both must pass. Throws ZuptError when the window is too short.
StationaryVerdict detect_stationary(std::span<const ImuSample> window,
                                    const Pose& rel_pose,
                                    const ZuptConfig& cfg);

/// r = R a_m / ||R a_m|| - g. Throws ZuptError when ||a_m|| is below
/// a tenth of standard gravity.
Vec3 gravity_residual(const Pose& pose, const Vec3& accel_meas,
                      const Vec3& gravity_dir);

/// 3x6 Jacobian of the gravity residual under the left perturbation
/// R <- Exp(dtheta) R; the translation block is exactly zero.
Eigen::Matrix<double, 3, 6> gravity_jacobian(const Pose& pose,
                                             const Vec3& accel_meas);

/// Information contributed to the graph: J^T (1/sigma^2 I) J. Rank <= 2;
/// used directly, never inverted.
Mat6 gravity_information(const Eigen::Matrix<double, 3, 6>& jacobian,
                         double sigma_accel);

/// r_nm = Log(X_t^{-1} X_{t-1}).
Twist no_motion_residual(const Pose& current, const Pose& previous);

/// Information for the no-motion factor: diag(1/sigma_rot^2, 1/sigma_trans^2).
Mat6 no_motion_information(const ZuptConfig& cfg);

}  // namespace priorloc
