// Degeneracy detection for scan-to-map registration: condition numbers of
// the Hessian's rotation/translation blocks plus per-correspondence
// contribution ratios. Gates acceptance of map factors.

#pragma once

#include <array>
#include <limits>
#include <string>

#include "priorloc/lie.hpp"

namespace priorloc {

struct DegeneracyConfig {
  double kappa_threshold = 30.0;  // report / inflate above this
  double kappa_reject = 1e5;      // discard the map factor above this
  double axis_cos_threshold = 0.8;
};

struct DegeneracyReport {
  Vec3 sv_rot = Vec3::Zero();    // singular values, descending
  Vec3 sv_trans = Vec3::Zero();
  Mat3 u_rot = Mat3::Identity();    // left singular vectors (columns)
  Mat3 u_trans = Mat3::Identity();
  double kappa_rot = 1.0;           // +inf sentinel when sigma_min == 0
  double kappa_trans = 1.0;
  std::array<int, 6> contrib_counts{};     // [rot x y z, trans x y z]
  std::array<double, 6> contrib_ratios{};
  std::array<bool, 6> degenerate_axes{};
  bool zero_residual = false;  // all contributions zero, ratios uninformative
  bool accepted = true;

  [[nodiscard]] std::string to_json() const;
};

inline constexpr double kKappaInf = std::numeric_limits<double>::infinity();

/// SVD of the two diagonal 3x3 blocks of H (rotation = H[0:3,0:3],
/// translation = H[3:6,3:6] in [theta; t] ordering).
void condition_numbers(const Mat6& hessian, DegeneracyReport& report);

/// Per-correspondence contribution c_i = -J_i^T r_i, assigned to the
/// dimension of largest |c_i| (ties to the lowest index).
void contribution_ratios(const Eigen::MatrixXd& jacobian,
                         const Eigen::VectorXd& residuals,
                         DegeneracyReport& report);

/// Full assessment on the first ICP iteration's linear system.
DegeneracyReport assess(const Mat6& hessian, const Eigen::MatrixXd& jacobian,
                        const Eigen::VectorXd& residuals,
                        const DegeneracyConfig& cfg, bool converged = true);

}  // namespace priorloc
