#include "priorloc/trajectory.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace priorloc {

Trajectory load_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrajectoryError("cannot open trajectory: " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw TrajectoryError("unparsable TUM line: '" + line + "'");
    }
    StampedPose sp;
    sp.t = t;
    sp.pose.t = Vec3(tx, ty, tz);
    sp.pose.R = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    traj.push_back(sp);
  }
  return traj;
}

void save_tum(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TrajectoryError("cannot open for write: " + path);
  out.precision(17);
  for (const StampedPose& sp : traj) {
    Eigen::Quaterniond q(sp.pose.R);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();  // canonical sign
    out << sp.t << " " << sp.pose.t.x() << " " << sp.pose.t.y() << " "
        << sp.pose.t.z() << " " << q.x() << " " << q.y() << " " << q.z() << " "
        << q.w() << "\n";
  }
}

std::vector<std::pair<int, int>> associate(const Trajectory& est,
                                           const Trajectory& gt,
                                           double max_dt) {
  std::vector<std::pair<int, int>> pairs;
  int j = 0;
  for (int i = 0; i < static_cast<int>(est.size()); ++i) {
    // gt is time-sorted; advance to the closest stamp.
    while (j + 1 < static_cast<int>(gt.size()) &&
           std::abs(gt[j + 1].t - est[i].t) <= std::abs(gt[j].t - est[i].t)) {
      ++j;
    }
    if (!gt.empty() && std::abs(gt[j].t - est[i].t) <= max_dt) {
      pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

Pose umeyama_alignment(const std::vector<Vec3>& est,
                       const std::vector<Vec3>& gt) {
  if (est.size() != gt.size() || est.size() < 3) {
    throw std::runtime_error("umeyama_alignment: need >= 3 paired points");
  }
  const double n = static_cast<double>(est.size());
  Vec3 mu_e = Vec3::Zero(), mu_g = Vec3::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    mu_e += est[i];
    mu_g += gt[i];
  }
  mu_e /= n;
  mu_g /= n;
  Mat3 sigma = Mat3::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    sigma += (gt[i] - mu_g) * (est[i] - mu_e).transpose();
  }
  sigma /= n;
  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    s(2, 2) = -1.0;
  }
  Pose out;
  out.R = svd.matrixU() * s * svd.matrixV().transpose();
  out.t = mu_g - out.R * mu_e;
  return out;
}

}  // namespace priorloc
