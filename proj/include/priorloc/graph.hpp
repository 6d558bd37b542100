// Pose-only factor graph: odometry (LO), loop closure (LC), no-motion (NM),
// gravity (GF), map (DM) and gauge prior factors over SE(3) states, batch
// Gauss-Newton optimization with Levenberg damping, covariance propagation
// and Cholesky-based marginal recovery.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "priorloc/lie.hpp"

namespace priorloc {

enum class FactorKind { kOdometry, kLoopClosure, kNoMotion, kGravity, kMap, kPrior };

const char* to_string(FactorKind kind);

struct Factor {
  FactorKind kind = FactorKind::kOdometry;
  int key1 = -1;
  int key2 = -1;  // -1 for unary factors
  Pose measurement;                 // between (binary) or absolute (DM/prior)
  Mat6 information = Mat6::Identity();
  // Gravity factor payload; information above is unused for GF.
  Vec3 accel_meas = Vec3::Zero();
  Vec3 gravity_dir = Vec3::UnitZ();
  Mat3 gf_weight = Mat3::Identity();  // 3x3 residual weight

  [[nodiscard]] bool binary() const { return key2 >= 0; }
  [[nodiscard]] int residual_dim() const {
    return kind == FactorKind::kGravity ? 3 : 6;
  }

  static Factor Odometry(int i, int j, const Pose& between, const Mat6& info);
  static Factor LoopClosure(int i, int j, const Pose& between, const Mat6& info);
  /// r = Log(X_t^{-1} X_{t-1}); keys are (t, t-1).
  static Factor NoMotion(int t, int t_prev, const Mat6& info);
  static Factor Map(int k, const Pose& measured, const Mat6& info);
  static Factor Prior(int k, const Pose& measured, const Mat6& info);
  static Factor Gravity(int k, const Vec3& accel, const Vec3& gravity_dir,
                        double sigma_accel);
};

struct Graph {
  std::vector<Pose> states;
  std::vector<Factor> factors;

  int add_state(const Pose& pose) {
    states.push_back(pose);
    return static_cast<int>(states.size()) - 1;
  }
  void add_factor(const Factor& f) { factors.push_back(f); }
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Covariance of the relative pose X12 between consecutive odometry outputs,
/// assuming independent endpoint covariances:
/// Ad(X12^{-1}) Sigma1 Ad(X12^{-1})^T + Sigma2.
Cov6 propagate_odom_covariance(const Cov6& cov1, const Cov6& cov2,
                               const Pose& rel_pose);

/// Schur complement Sigma1 - Sigma12 Sigma2^{-1} Sigma12^T for callers that
/// do have the cross-covariance. Throws on singular Sigma2.
Cov6 schur_relative_covariance(const Cov6& cov1, const Cov6& cov2,
                               const Cov6& cross);

/// Residual of a factor at the given states (6-vector, or 3 for gravity).
Eigen::VectorXd factor_residual(const Factor& f, const std::vector<Pose>& states);

struct FactorJacobians {
  Eigen::MatrixXd j1;  // d r / d delta_{key1}, left perturbation
  Eigen::MatrixXd j2;  // empty for unary factors
};

FactorJacobians factor_jacobians(const Factor& f,
                                 const std::vector<Pose>& states);

struct AssembledSystem {
  Eigen::SparseMatrix<double> jacobian;  // M x 6P, factor insertion order
  Eigen::VectorXd residuals;             // M
  Eigen::SparseMatrix<double> weights;   // M x M block diagonal
  [[nodiscard]] Eigen::SparseMatrix<double> information() const;  // J^T W J
};

/// Stacks residuals and Jacobians in factor insertion order. Throws on an
/// empty factor set or a graph with poses unreachable from pose 0.
AssembledSystem assemble(const Graph& graph);

struct OptimizationResult {
  std::vector<Pose> states;
  double total_cost = 0.0;
  int iterations = 0;
  std::vector<Cov6> marginals;
  bool converged = false;
};

struct OptimizeOptions {
  int max_iterations = 50;
  double step_tol = 1e-8;       // ||delta||_inf
  double cost_change_tol = 1e-10;
  bool compute_marginals = true;
};

/// Damped Gauss-Newton MAP estimate. A gauge prior on pose 0 is added
/// automatically when the graph carries no prior factor: strong (1e6 I)
/// without map factors, weak (1e-2 I) when map factors anchor the graph.
OptimizationResult optimize(const Graph& graph,
                            const OptimizeOptions& opts = {});

/// Per-pose diagonal blocks of Lambda^{-1} via sparse Cholesky. Throws when
/// Lambda is not positive definite (gauge not fixed or graph degenerate).
std::vector<Cov6> marginal_covariances(const Graph& graph);

/// JSON lines, one factor per line: {kind, keys, measurement (tx ty tz qx qy
/// qz qw), information (21 upper-triangular values)}.
std::string dump_graph(const Graph& graph);

}  // namespace priorloc
