#include "priorloc/degeneracy.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

namespace priorloc {
namespace {

double block_kappa(const Mat3& block, Vec3& sv, Mat3& u) {
  Eigen::JacobiSVD<Mat3> svd(block, Eigen::ComputeFullU);
  sv = svd.singularValues();  // descending
  u = svd.matrixU();
  if (sv(2) <= 0.0) return kKappaInf;
  return sv(0) / sv(2);
}

}  // namespace

void condition_numbers(const Mat6& hessian, DegeneracyReport& report) {
  report.kappa_rot =
      block_kappa(hessian.topLeftCorner<3, 3>(), report.sv_rot, report.u_rot);
  report.kappa_trans = block_kappa(hessian.bottomRightCorner<3, 3>(),
                                   report.sv_trans, report.u_trans);
}

void contribution_ratios(const Eigen::MatrixXd& jacobian,
                         const Eigen::VectorXd& residuals,
                         DegeneracyReport& report) {
  report.contrib_counts.fill(0);
  const Eigen::Index n = jacobian.rows();
  bool any_nonzero = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec6 c = -jacobian.row(i).transpose() * residuals(i);
    int best = 0;
    double best_abs = std::abs(c(0));
    for (int d = 1; d < 6; ++d) {
      if (std::abs(c(d)) > best_abs) {
        best_abs = std::abs(c(d));
        best = d;
      }
    }
    if (best_abs > 0.0) any_nonzero = true;
    ++report.contrib_counts[best];
  }
  report.zero_residual = !any_nonzero;
  for (int d = 0; d < 6; ++d) {
    report.contrib_ratios[d] =
        n > 0 ? static_cast<double>(report.contrib_counts[d]) /
                    static_cast<double>(n)
              : 0.0;
  }
}

DegeneracyReport assess(const Mat6& hessian, const Eigen::MatrixXd& jacobian,
                        const Eigen::VectorXd& residuals,
                        const DegeneracyConfig& cfg, bool converged) {
  DegeneracyReport report;
  condition_numbers(hessian, report);
  contribution_ratios(jacobian, residuals, report);

  // A world axis is degenerate when its block's kappa crosses the threshold
  // and the axis aligns with one of the block's weak singular directions
  // (every direction whose singular value is kappa_threshold below sigma_max).
  const auto flag_block = [&](double kappa, const Vec3& sv, const Mat3& u,
                              int offset) {
    if (!(kappa > cfg.kappa_threshold)) return;
    for (int j = 0; j < 3; ++j) {
      const bool weak =
          sv(j) <= 0.0 || sv(0) / sv(j) > cfg.kappa_threshold;
      if (!weak) continue;
      for (int axis = 0; axis < 3; ++axis) {
        if (std::abs(u.col(j)(axis)) > cfg.axis_cos_threshold) {
          report.degenerate_axes[offset + axis] = true;
        }
      }
    }
  };
  flag_block(report.kappa_rot, report.sv_rot, report.u_rot, 0);
  flag_block(report.kappa_trans, report.sv_trans, report.u_trans, 3);

  report.accepted = converged && report.kappa_rot < cfg.kappa_reject &&
                    report.kappa_trans < cfg.kappa_reject;
  return report;
}

std::string DegeneracyReport::to_json() const {
  std::ostringstream os;
  os.precision(12);
  const auto vec3 = [&](const Vec3& v) {
    std::ostringstream s;
    s.precision(12);
    s << "[" << v(0) << "," << v(1) << "," << v(2) << "]";
    return s.str();
  };
  const auto num = [](double v) {
    if (std::isinf(v)) return std::string("1e308");
    std::ostringstream s;
    s.precision(12);
    s << v;
    return s.str();
  };
  os << "{\"sv_rot\":" << vec3(sv_rot) << ",\"sv_trans\":" << vec3(sv_trans)
     << ",\"kappa_rot\":" << num(kappa_rot)
     << ",\"kappa_trans\":" << num(kappa_trans) << ",\"contrib_counts\":[";
  for (int d = 0; d < 6; ++d) os << (d ? "," : "") << contrib_counts[d];
  os << "],\"contrib_ratios\":[";
  for (int d = 0; d < 6; ++d) os << (d ? "," : "") << contrib_ratios[d];
  os << "],\"degenerate_axes\":[";
  for (int d = 0; d < 6; ++d) {
    os << (d ? "," : "") << (degenerate_axes[d] ? "true" : "false");
  }
  os << "],\"zero_residual\":" << (zero_residual ? "true" : "false")
     << ",\"accepted\":" << (accepted ? "true" : "false") << "}";
  return os.str();
}

}  // namespace priorloc
