// SO(3)/SE(3) group operations used by every factor Jacobian in the system.
//
// Conventions (fixed project-wide):
//   - Tangent vectors are ordered [rotation; translation]: xi = [theta; rho].
//   - Perturbations are left-multiplicative: X <- Exp(delta) * X.
//   - Rotations are 3x3 matrices, re-orthonormalized on demand via SVD.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>

namespace priorloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Twist = Vec6;  // [theta (rad); rho (m)]
using Cov6 = Mat6;

namespace lie {

constexpr double kTaylorEps = 1e-8;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

// Rodrigues formula with Taylor fallback near zero.
inline Mat3 so3_exp(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 W = skew(theta);
  if (angle < kTaylorEps) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double a = std::sin(angle) / angle;
  const double b = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + a * W + b * W * W;
}

inline Vec3 so3_log(const Mat3& R) {
  const double cos_angle = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (angle > M_PI - 1e-6) {
    // Near pi the skew part w vanishes; extract the axis from the dominant
    // column of R + I instead.
    const Mat3 S = R + Mat3::Identity();
    int col = 0;
    S.colwise().norm().maxCoeff(&col);
    Vec3 axis = S.col(col).normalized();
    // Sign from the skew part when available, otherwise either is valid.
    if (axis.dot(w) < 0.0) axis = -axis;
    return angle * axis;
  }
  if (angle < kTaylorEps) {
    return 0.5 * w;
  }
  return (angle / (2.0 * std::sin(angle))) * w;
}

// SO(3) left Jacobian J_l(theta): Exp(theta + d) ~= Exp(J_l d) Exp(theta).
inline Mat3 so3_left_jacobian(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 W = skew(theta);
  if (angle < kTaylorEps) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double a2 = angle * angle;
  const double b = (1.0 - std::cos(angle)) / a2;
  const double c = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() + b * W + c * W * W;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 W = skew(theta);
  if (angle < kTaylorEps) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double half = 0.5 * angle;
  const double cot_term = 1.0 / (angle * angle) -
                          (1.0 + std::cos(angle)) /
                              (2.0 * angle * std::sin(angle));
  return Mat3::Identity() - 0.5 * W + cot_term * W * W;
}

}  // namespace lie

/// Rigid body pose in SE(3): x_world = R * x_body + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& translation)
      : R(rotation), t(translation) {}

  static Pose Identity() { return Pose(); }

  [[nodiscard]] Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return R * p + t; }

  /// Projects R back onto SO(3) (closest orthonormal matrix).
  void reorthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0.0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      R = svd.matrixU() * flip * svd.matrixV().transpose();
    }
  }

  [[nodiscard]] double orthonormality_error() const {
    return (R.transpose() * R - Mat3::Identity()).norm();
  }
};

namespace lie {

inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.R * b.R, a.R * b.t + a.t);
}

inline Pose inverse(const Pose& a) {
  return Pose(a.R.transpose(), -(a.R.transpose() * a.t));
}

/// between(A, B) = A^{-1} * B.
inline Pose between(const Pose& a, const Pose& b) {
  return compose(inverse(a), b);
}

inline Pose se3_exp(const Twist& xi) {
  const Vec3 theta = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  return Pose(so3_exp(theta), so3_left_jacobian(theta) * rho);
}

inline Twist se3_log(const Pose& x) {
  Twist xi;
  const Vec3 theta = so3_log(x.R);
  xi.head<3>() = theta;
  xi.tail<3>() = so3_left_jacobian_inverse(theta) * x.t;
  return xi;
}

/// Adjoint of X in [theta; rho] ordering: Ad = [[R, 0], [skew(t) R, R]].
inline Mat6 adjoint(const Pose& x) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = x.R;
  ad.bottomLeftCorner<3, 3>() = skew(x.t) * x.R;
  ad.bottomRightCorner<3, 3>() = x.R;
  return ad;
}

// Barfoot's Q matrix, the off-diagonal block of the SE(3) left Jacobian.
inline Mat3 se3_q_matrix(const Vec3& theta, const Vec3& rho) {
  const Mat3 W = skew(theta);
  const Mat3 V = skew(rho);
  const double angle = theta.norm();
  double c1, c2, c3;
  if (angle < 1e-4) {
    const double a2 = angle * angle;
    c1 = 1.0 / 6.0 - a2 / 120.0;
    c2 = -1.0 / 24.0 + a2 / 720.0;
    c3 = -1.0 / 120.0 + a2 / 5040.0;
  } else {
    const double a2 = angle * angle;
    const double a4 = a2 * a2;
    c1 = (angle - std::sin(angle)) / (a2 * angle);
    c2 = (1.0 - 0.5 * a2 - std::cos(angle)) / a4;
    c3 = (angle - std::sin(angle) - angle * a2 / 6.0) / (a4 * angle);
  }
  return 0.5 * V + c1 * (W * V + V * W + W * V * W) -
         c2 * (W * W * V + V * W * W - 3.0 * W * V * W) -
         0.5 * (c2 - 3.0 * c3) * (W * V * W * W + W * W * V * W);
}

/// SE(3) left Jacobian in [theta; rho] ordering.
inline Mat6 se3_left_jacobian(const Twist& xi) {
  const Vec3 theta = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const Mat3 J = so3_left_jacobian(theta);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = J;
  out.bottomLeftCorner<3, 3>() = se3_q_matrix(theta, rho);
  out.bottomRightCorner<3, 3>() = J;
  return out;
}

inline Mat6 se3_left_jacobian_inverse(const Twist& xi) {
  const Vec3 theta = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const Mat3 Jinv = so3_left_jacobian_inverse(theta);
  const Mat3 Q = se3_q_matrix(theta, rho);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = Jinv;
  out.bottomLeftCorner<3, 3>() = -Jinv * Q * Jinv;
  out.bottomRightCorner<3, 3>() = Jinv;
  return out;
}

/// Left-perturbation retraction: Exp(delta) * X. Used by ICP and the graph.
inline Pose retract(const Twist& delta, const Pose& x) {
  return compose(se3_exp(delta), x);
}

}  // namespace lie
}  // namespace priorloc
