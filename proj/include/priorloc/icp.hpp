// Point-to-plane ICP against a prior map with Gauss-Newton updates.
// Produces the relative pose, Hessian and covariance consumed by the
// graph's map factor.

#pragma once

#include <stdexcept>
#include <vector>

#include "priorloc/cloud.hpp"
#include "priorloc/degeneracy.hpp"
#include "priorloc/kdtree.hpp"

namespace priorloc {

struct Correspondence {
  int source_id = -1;  // scan point
  int target_id = -1;  // map point
  Vec3 normal = Vec3::UnitZ();
  double residual = 0.0;  // meters, signed point-to-plane distance
};

struct IcpConfig {
  double max_corr_dist = 0.2;  // m
  int max_iterations = 30;
  double rotation_eps = 1e-5;     // rad
  double translation_eps = 1e-5;  // m
  int min_correspondences = 50;
  double sigma_lidar = 0.03;  // m; weight = 1 / sigma^2
  DegeneracyConfig degeneracy;

  [[nodiscard]] double weight() const {
    return 1.0 / (sigma_lidar * sigma_lidar);
  }
};

struct RegistrationResult {
  Pose pose;               // map-frame scan pose
  Mat6 hessian = Mat6::Zero();
  Cov6 covariance = Cov6::Zero();  // damped inverse Hessian, inflated on
                                   // degenerate directions
  int iterations = 0;
  double rmse = 0.0;       // m, point-to-plane
  double overlap = 0.0;    // matched fraction of scan points
  bool converged = false;
  DegeneracyReport degeneracy;
};

class IcpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The map cloud provides the plane normals; map points with invalid
/// normals are skipped. Throws IcpError("insufficient overlap") when fewer
/// than min_correspondences pairs survive.
std::vector<Correspondence> find_correspondences(const PointCloud& scan,
                                                 const PointCloud& map,
                                                 const SpatialIndex& map_index,
                                                 const Pose& pose,
                                                 const IcpConfig& cfg);

struct LinearSystem {
  Eigen::MatrixXd jacobian;   // N x 6, rows [((R p + t) x n)^T, n^T]
  Eigen::VectorXd residuals;  // N
  Mat6 hessian;               // J^T W J
  Vec6 gradient;              // -J^T W r
};

/// Linearization about X under the left-perturbation retraction
/// X <- Exp(delta) X, so the rotation lever arm is the world-frame point.
LinearSystem build_linear_system(const std::vector<Correspondence>& corrs,
                                 const PointCloud& scan, const PointCloud& map,
                                 const Pose& pose, const IcpConfig& cfg);

/// Solves (H + lambda I) delta = g with a Tikhonov floor
/// lambda = 1e-6 trace(H)/6. Throws IcpError on a singular system.
Twist solve_update(const Mat6& hessian, const Vec6& gradient);

/// Full iterate-rematch loop. Degeneracy is evaluated on the first
/// iteration's linear system only.
RegistrationResult register_scan(const PointCloud& scan, const PointCloud& map,
                                 const SpatialIndex& map_index,
                                 const Pose& initial_guess,
                                 const IcpConfig& cfg);

}  // namespace priorloc
