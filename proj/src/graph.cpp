#include "priorloc/graph.hpp"

#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "priorloc/zupt.hpp"

namespace priorloc {

const char* to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::kOdometry: return "LO";
    case FactorKind::kLoopClosure: return "LC";
    case FactorKind::kNoMotion: return "NM";
    case FactorKind::kGravity: return "GF";
    case FactorKind::kMap: return "DM";
    case FactorKind::kPrior: return "PRIOR";
  }
  return "?";
}

Factor Factor::Odometry(int i, int j, const Pose& between, const Mat6& info) {
  Factor f;
  f.kind = FactorKind::kOdometry;
  f.key1 = i;
  f.key2 = j;
  f.measurement = between;
  f.information = info;
  return f;
}

Factor Factor::LoopClosure(int i, int j, const Pose& between,
                           const Mat6& info) {
  Factor f = Odometry(i, j, between, info);
  f.kind = FactorKind::kLoopClosure;
  return f;
}

Factor Factor::NoMotion(int t, int t_prev, const Mat6& info) {
  Factor f;
  f.kind = FactorKind::kNoMotion;
  f.key1 = t;
  f.key2 = t_prev;
  f.measurement = Pose::Identity();
  f.information = info;
  return f;
}

Factor Factor::Map(int k, const Pose& measured, const Mat6& info) {
  Factor f;
  f.kind = FactorKind::kMap;
  f.key1 = k;
  f.measurement = measured;
  f.information = info;
  return f;
}

Factor Factor::Prior(int k, const Pose& measured, const Mat6& info) {
  Factor f = Map(k, measured, info);
  f.kind = FactorKind::kPrior;
  return f;
}

Factor Factor::Gravity(int k, const Vec3& accel, const Vec3& gravity_dir,
                       double sigma_accel) {
  Factor f;
  f.kind = FactorKind::kGravity;
  f.key1 = k;
  f.accel_meas = accel;
  f.gravity_dir = gravity_dir;
  f.gf_weight = Mat3::Identity() / (sigma_accel * sigma_accel);
  return f;
}

Cov6 propagate_odom_covariance(const Cov6& cov1, const Cov6& cov2,
                               const Pose& rel_pose) {
  // With endpoint noise X_i exp(xi_i) and the relative error defined as
  // Log(X12^{-1} X12~), the first endpoint's noise is transported by the
  // adjoint of the inverse relative pose:
  //   Log(X12^{-1} X1~^{-1} X2~) ~= xi_2 - Ad(X12^{-1}) xi_1.
  const Mat6 ad = lie::adjoint(lie::inverse(rel_pose));
  return ad * cov1 * ad.transpose() + cov2;
}

Cov6 schur_relative_covariance(const Cov6& cov1, const Cov6& cov2,
                               const Cov6& cross) {
  Eigen::FullPivLU<Mat6> lu(cov2);
  if (!lu.isInvertible()) {
    throw GraphError("schur_relative_covariance: singular Sigma2");
  }
  const Cov6 out = cov1 - cross * lu.solve(cross.transpose());
  return 0.5 * (out + out.transpose());
}

Eigen::VectorXd factor_residual(const Factor& f,
                                const std::vector<Pose>& states) {
  switch (f.kind) {
    case FactorKind::kOdometry:
    case FactorKind::kLoopClosure:
    case FactorKind::kNoMotion: {
      const Pose predicted = lie::between(states[f.key1], states[f.key2]);
      return lie::se3_log(lie::compose(lie::inverse(f.measurement), predicted));
    }
    case FactorKind::kMap:
    case FactorKind::kPrior: {
      return lie::se3_log(
          lie::compose(lie::inverse(f.measurement), states[f.key1]));
    }
    case FactorKind::kGravity:
      return gravity_residual(states[f.key1], f.accel_meas, f.gravity_dir);
  }
  throw GraphError("unknown factor kind");
}

FactorJacobians factor_jacobians(const Factor& f,
                                 const std::vector<Pose>& states) {
  FactorJacobians out;
  switch (f.kind) {
    case FactorKind::kOdometry:
    case FactorKind::kLoopClosure:
    case FactorKind::kNoMotion: {
      // r = Log(E), E = Z^{-1} X_i^{-1} X_j. A left perturbation of X_j maps
      // to exp(Ad_A delta) E with A = Z^{-1} X_i^{-1}; one of X_i to the
      // negated same transport.
      const Pose a = lie::compose(lie::inverse(f.measurement),
                                  lie::inverse(states[f.key1]));
      const Eigen::VectorXd r = factor_residual(f, states);
      const Mat6 jl_inv = lie::se3_left_jacobian_inverse(r);
      out.j2 = jl_inv * lie::adjoint(a);
      out.j1 = -out.j2;
      return out;
    }
    case FactorKind::kMap:
    case FactorKind::kPrior: {
      const Eigen::VectorXd r = factor_residual(f, states);
      const Mat6 jl_inv = lie::se3_left_jacobian_inverse(r);
      out.j1 = jl_inv * lie::adjoint(lie::inverse(f.measurement));
      return out;
    }
    case FactorKind::kGravity:
      out.j1 = gravity_jacobian(states[f.key1], f.accel_meas);
      return out;
  }
  throw GraphError("unknown factor kind");
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

void check_connected(const Graph& graph) {
  const int n = static_cast<int>(graph.states.size());
  UnionFind uf(n);
  for (const Factor& f : graph.factors) {
    if (f.binary()) {
      uf.unite(f.key1, f.key2);
    } else if (f.kind == FactorKind::kMap || f.kind == FactorKind::kPrior) {
      // World-anchored factors join the gauge component.
      uf.unite(f.key1, 0);
    }
  }
  std::vector<int> unreachable;
  for (int i = 0; i < n; ++i) {
    if (uf.find(i) != uf.find(0)) unreachable.push_back(i);
  }
  if (!unreachable.empty()) {
    std::ostringstream os;
    os << "disconnected graph, poses unreachable from pose 0:";
    for (int i : unreachable) os << " " << i;
    throw GraphError(os.str());
  }
}

const Eigen::MatrixXd& factor_weight(const Factor& f, Eigen::MatrixXd& scratch) {
  if (f.kind == FactorKind::kGravity) {
    scratch = f.gf_weight;
  } else {
    scratch = f.information;
  }
  return scratch;
}

double graph_cost(const Graph& graph, const std::vector<Pose>& states) {
  double cost = 0.0;
  Eigen::MatrixXd w;
  for (const Factor& f : graph.factors) {
    const Eigen::VectorXd r = factor_residual(f, states);
    factor_weight(f, w);
    cost += r.dot(w * r);
  }
  return cost;
}

Graph with_gauge_prior(const Graph& graph) {
  bool has_prior = false;
  bool has_map = false;
  for (const Factor& f : graph.factors) {
    has_prior |= f.kind == FactorKind::kPrior;
    has_map |= f.kind == FactorKind::kMap;
  }
  Graph g = graph;
  if (!has_prior && !g.states.empty()) {
    const double w = has_map ? 1e-2 : 1e6;
    g.add_factor(Factor::Prior(0, g.states[0], w * Mat6::Identity()));
  }
  return g;
}

std::vector<Cov6> marginals_from_system(const AssembledSystem& sys,
                                        int num_poses) {
  const Eigen::SparseMatrix<double> lambda = sys.information();
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(lambda);
  if (llt.info() != Eigen::Success) {
    throw GraphError(
        "information matrix not positive definite: gauge not fixed or graph "
        "degenerate");
  }
  std::vector<Cov6> marginals(num_poses);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(lambda.rows());
  for (int p = 0; p < num_poses; ++p) {
    Cov6 block;
    for (int c = 0; c < 6; ++c) {
      rhs.setZero();
      rhs(6 * p + c) = 1.0;
      const Eigen::VectorXd col = llt.solve(rhs);
      block.col(c) = col.segment<6>(6 * p);
    }
    marginals[p] = 0.5 * (block + block.transpose());
  }
  return marginals;
}

}  // namespace

Eigen::SparseMatrix<double> AssembledSystem::information() const {
  Eigen::SparseMatrix<double> lambda =
      jacobian.transpose() * weights * jacobian;
  return lambda;
}

AssembledSystem assemble(const Graph& graph) {
  if (graph.factors.empty()) {
    throw GraphError("assemble: empty factor set");
  }
  check_connected(graph);

  int rows = 0;
  for (const Factor& f : graph.factors) rows += f.residual_dim();
  const int cols = 6 * static_cast<int>(graph.states.size());

  AssembledSystem sys;
  sys.residuals.resize(rows);
  std::vector<Eigen::Triplet<double>> j_trip;
  std::vector<Eigen::Triplet<double>> w_trip;

  int row = 0;
  Eigen::MatrixXd w;
  for (const Factor& f : graph.factors) {
    const int dim = f.residual_dim();
    const Eigen::VectorXd r = factor_residual(f, graph.states);
    const FactorJacobians jac = factor_jacobians(f, graph.states);
    sys.residuals.segment(row, dim) = r;

    const auto add_block = [&](const Eigen::MatrixXd& block, int key) {
      for (int a = 0; a < dim; ++a) {
        for (int b = 0; b < 6; ++b) {
          if (block(a, b) != 0.0) {
            j_trip.emplace_back(row + a, 6 * key + b, block(a, b));
          }
        }
      }
    };
    add_block(jac.j1, f.key1);
    if (f.binary()) add_block(jac.j2, f.key2);

    factor_weight(f, w);
    for (int a = 0; a < dim; ++a) {
      for (int b = 0; b < dim; ++b) {
        if (w(a, b) != 0.0) w_trip.emplace_back(row + a, row + b, w(a, b));
      }
    }
    row += dim;
  }

  sys.jacobian.resize(rows, cols);
  sys.jacobian.setFromTriplets(j_trip.begin(), j_trip.end());
  sys.weights.resize(rows, rows);
  sys.weights.setFromTriplets(w_trip.begin(), w_trip.end());
  return sys;
}

OptimizationResult optimize(const Graph& graph, const OptimizeOptions& opts) {
  Graph g = with_gauge_prior(graph);
  if (g.states.empty()) throw GraphError("optimize: empty graph");

  OptimizationResult result;
  result.states = g.states;
  const int num_poses = static_cast<int>(g.states.size());

  double cost = graph_cost(g, result.states);
  double lambda = 1e-8;
  int compositions = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    g.states = result.states;
    const AssembledSystem sys = assemble(g);
    const Eigen::SparseMatrix<double> hessian = sys.information();
    const Eigen::VectorXd gradient =
        -(sys.jacobian.transpose() * (sys.weights * sys.residuals));
    result.iterations = iter + 1;

    bool accepted = false;
    Eigen::VectorXd delta;
    for (int attempt = 0; attempt < 20; ++attempt) {
      Eigen::SparseMatrix<double> damped = hessian;
      Eigen::SparseMatrix<double> identity(damped.rows(), damped.cols());
      identity.setIdentity();
      damped += lambda * identity;
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(damped);
      if (llt.info() != Eigen::Success) {
        lambda = std::max(lambda * 10.0, 1e-10);
        continue;
      }
      delta = llt.solve(gradient);
      if (delta.lpNorm<Eigen::Infinity>() < opts.step_tol) {
        // Below the step tolerance the update is numerical noise; leave the
        // states untouched.
        accepted = true;
        result.converged = true;
        break;
      }
      std::vector<Pose> candidate = result.states;
      for (int p = 0; p < num_poses; ++p) {
        candidate[p] = lie::retract(delta.segment<6>(6 * p), candidate[p]);
      }
      if (++compositions % 100 == 0) {
        for (Pose& x : candidate) x.reorthonormalize();
      } else {
        for (Pose& x : candidate) {
          if (x.orthonormality_error() > 1e-7) x.reorthonormalize();
        }
      }
      const double candidate_cost = graph_cost(g, candidate);
      if (candidate_cost <= cost + 1e-15) {
        const double change = cost - candidate_cost;
        result.states = std::move(candidate);
        cost = candidate_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (delta.lpNorm<Eigen::Infinity>() < opts.step_tol ||
            change < opts.cost_change_tol) {
          result.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No damping level decreases the cost: already at a minimum.
      result.converged = true;
      break;
    }
    if (result.converged) break;
  }

  result.total_cost = cost;
  if (opts.compute_marginals) {
    g.states = result.states;
    result.marginals = marginals_from_system(assemble(g), num_poses);
  }
  return result;
}

std::vector<Cov6> marginal_covariances(const Graph& graph) {
  return marginals_from_system(assemble(graph),
                               static_cast<int>(graph.states.size()));
}

std::string dump_graph(const Graph& graph) {
  std::ostringstream os;
  os.precision(17);
  for (const Factor& f : graph.factors) {
    os << "{\"kind\":\"" << to_string(f.kind) << "\",\"keys\":[" << f.key1;
    if (f.binary()) os << "," << f.key2;
    os << "],\"measurement\":[";
    const Eigen::Quaterniond q(f.measurement.R);
    os << f.measurement.t.x() << "," << f.measurement.t.y() << ","
       << f.measurement.t.z() << "," << q.x() << "," << q.y() << "," << q.z()
       << "," << q.w() << "],\"information\":[";
    const Mat6& info = f.information;
    bool first = true;
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) {
        os << (first ? "" : ",") << info(a, b);
        first = false;
      }
    }
    os << "]}\n";
  }
  return os.str();
}

}  // namespace priorloc
