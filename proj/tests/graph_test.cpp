#include "priorloc/graph.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "priorloc/zupt.hpp"

using namespace priorloc;

namespace {

std::mt19937_64 rng(7);

Vec3 random_vec3(double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Vec3(d(rng), d(rng), d(rng));
}

Pose random_pose(double rot_scale = 1.0, double trans_scale = 2.0) {
  Twist xi;
  xi.head<3>() = random_vec3(rot_scale);
  xi.tail<3>() = random_vec3(trans_scale);
  return lie::se3_exp(xi);
}

Cov6 random_spd(double scale) {
  Eigen::Matrix<double, 6, 6> a;
  for (int i = 0; i < 6; ++i) a.row(i) = Vec6::NullaryExpr([&](int) {
        std::normal_distribution<double> g(0.0, 1.0);
        return g(rng);
      }).transpose();
  return scale * (a * a.transpose()) + 1e-3 * Mat6::Identity();
}

Twist gaussian_twist(double sigma) {
  std::normal_distribution<double> g(0.0, sigma);
  Twist xi;
  for (int i = 0; i < 6; ++i) xi(i) = g(rng);
  return xi;
}

// Numeric Jacobian of a factor residual with respect to one state, under the
// left-perturbation retraction.
Eigen::MatrixXd numeric_jacobian(const Factor& f, std::vector<Pose> states,
                                 int key) {
  const double eps = 1e-7;
  const int dim = f.residual_dim();
  Eigen::MatrixXd jac(dim, 6);
  for (int c = 0; c < 6; ++c) {
    Twist dp = Twist::Zero(), dm = Twist::Zero();
    dp(c) = eps;
    dm(c) = -eps;
    std::vector<Pose> sp = states, sm = states;
    sp[key] = lie::retract(dp, states[key]);
    sm[key] = lie::retract(dm, states[key]);
    jac.col(c) =
        (factor_residual(f, sp) - factor_residual(f, sm)) / (2.0 * eps);
  }
  return jac;
}

}  // namespace

TEST_CASE("odometry covariance propagation closed forms") {
  const Cov6 s1 = random_spd(0.1);
  const Cov6 s2 = random_spd(0.1);

  const Cov6 at_identity = propagate_odom_covariance(s1, s2, Pose::Identity());
  CHECK((at_identity - (s1 + s2)).norm() < 1e-12);

  const Pose rel = random_pose();
  const Cov6 no_first = propagate_odom_covariance(Cov6::Zero(), s2, rel);
  CHECK((no_first - s2).norm() == 0.0);
}

TEST_CASE("odometry covariance propagation matches sampling") {
  const Pose x1 = random_pose();
  const Pose x2 = random_pose();
  const Pose rel = lie::between(x1, x2);
  const double sigma = 0.01;
  const Cov6 step = sigma * sigma * Mat6::Identity();

  const Cov6 predicted = propagate_odom_covariance(step, step, rel);

  const int n = 100000;
  Cov6 accum = Cov6::Zero();
  for (int i = 0; i < n; ++i) {
    const Pose x1n = lie::compose(x1, lie::se3_exp(gaussian_twist(sigma)));
    const Pose x2n = lie::compose(x2, lie::se3_exp(gaussian_twist(sigma)));
    const Twist err = lie::se3_log(lie::compose(lie::inverse(rel),
                                                lie::between(x1n, x2n)));
    accum += err * err.transpose();
  }
  const Cov6 empirical = accum / n;
  CHECK((empirical - predicted).norm() < 0.05 * predicted.norm());
}

TEST_CASE("schur relative covariance") {
  const Cov6 s1 = random_spd(0.5);
  const Cov6 s2 = random_spd(0.5);

  CHECK((schur_relative_covariance(s1, s2, Cov6::Zero()) - s1).norm() < 1e-12);
  CHECK((schur_relative_covariance(s1, s2, s2) - (s1 - s2)).norm() < 1e-9);

  // Extracted from a random SPD joint covariance the result stays PSD and
  // matches the direct conditional-covariance oracle.
  Eigen::Matrix<double, 12, 12> a;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) a(i, j) = g(rng);
  const Eigen::Matrix<double, 12, 12> joint =
      a * a.transpose() + 1e-3 * Eigen::Matrix<double, 12, 12>::Identity();
  const Cov6 j11 = joint.topLeftCorner<6, 6>();
  const Cov6 j22 = joint.bottomRightCorner<6, 6>();
  const Cov6 j12 = joint.topRightCorner<6, 6>();
  const Cov6 out = schur_relative_covariance(j11, j22, j12);
  const Cov6 oracle = j11 - j12 * j22.inverse() * j12.transpose();
  CHECK((out - oracle).norm() < 1e-8 * oracle.norm());
  Eigen::SelfAdjointEigenSolver<Cov6> es(out);
  CHECK(es.eigenvalues().minCoeff() > -1e-9);

  CHECK_THROWS_AS(schur_relative_covariance(s1, Cov6::Zero(), s2), GraphError);
}

TEST_CASE("zero residual for consistent odometry factor") {
  std::vector<Pose> states{random_pose(), random_pose()};
  const Factor f =
      Factor::Odometry(0, 1, lie::between(states[0], states[1]),
                       Mat6::Identity());
  CHECK(factor_residual(f, states).norm() < 1e-12);
}

TEST_CASE("factor jacobians match finite differences") {
  ZuptConfig zupt;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Pose> states{random_pose(), random_pose()};

    std::vector<Factor> factors;
    factors.push_back(Factor::Odometry(
        0, 1, lie::compose(random_pose(0.1, 0.1),
                           lie::between(states[0], states[1])),
        Mat6::Identity()));
    factors.push_back(Factor::LoopClosure(
        0, 1, lie::compose(random_pose(0.1, 0.1),
                           lie::between(states[0], states[1])),
        Mat6::Identity()));
    factors.push_back(Factor::NoMotion(1, 0, no_motion_information(zupt)));
    factors.push_back(Factor::Map(
        0, lie::compose(random_pose(0.1, 0.1), states[0]), Mat6::Identity()));
    factors.push_back(Factor::Prior(
        1, lie::compose(random_pose(0.1, 0.1), states[1]), Mat6::Identity()));
    factors.push_back(Factor::Gravity(
        0, Vec3(0.3, -0.2, 9.6) + random_vec3(0.3), Vec3::UnitZ(), 0.05));

    for (const Factor& f : factors) {
      const FactorJacobians jac = factor_jacobians(f, states);
      const Eigen::MatrixXd fd1 = numeric_jacobian(f, states, f.key1);
      CHECK((jac.j1 - fd1).norm() < 1e-6 * std::max(1.0, fd1.norm()));
      if (f.binary()) {
        const Eigen::MatrixXd fd2 = numeric_jacobian(f, states, f.key2);
        CHECK((jac.j2 - fd2).norm() < 1e-6 * std::max(1.0, fd2.norm()));
      }
    }
  }
}

TEST_CASE("three pose reference stack is 48 by 18") {
  Graph g;
  for (int i = 0; i < 3; ++i) g.add_state(random_pose());
  g.add_factor(Factor::Odometry(0, 1, lie::between(g.states[0], g.states[1]),
                                Mat6::Identity()));
  g.add_factor(Factor::Odometry(1, 2, lie::between(g.states[1], g.states[2]),
                                Mat6::Identity()));
  for (int i = 0; i < 3; ++i) {
    g.add_factor(Factor::Map(i, g.states[i], Mat6::Identity()));
  }
  g.add_factor(Factor::Gravity(1, Vec3(0, 0, 9.81), Vec3::UnitZ(), 0.05));
  g.add_factor(Factor::Gravity(2, Vec3(0, 0, 9.81), Vec3::UnitZ(), 0.05));
  g.add_factor(Factor::LoopClosure(0, 2, lie::between(g.states[0], g.states[2]),
                                   Mat6::Identity()));
  g.add_factor(Factor::NoMotion(2, 1, Mat6::Identity()));

  const AssembledSystem sys = assemble(g);
  CHECK(sys.jacobian.rows() == 48);
  CHECK(sys.jacobian.cols() == 18);
  CHECK(sys.residuals.size() == 48);
  CHECK(sys.weights.rows() == 48);

  const Eigen::MatrixXd lambda = Eigen::MatrixXd(sys.information());
  CHECK((lambda - lambda.transpose()).norm() < 1e-9);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lambda);
  CHECK(es.eigenvalues().minCoeff() > -1e-8);
}

TEST_CASE("assemble rejects empty and disconnected graphs") {
  Graph empty;
  empty.add_state(Pose::Identity());
  CHECK_THROWS_AS(assemble(empty), GraphError);

  Graph disconnected;
  for (int i = 0; i < 3; ++i) disconnected.add_state(random_pose());
  disconnected.add_factor(Factor::Odometry(
      0, 1, lie::between(disconnected.states[0], disconnected.states[1]),
      Mat6::Identity()));
  try {
    assemble(disconnected);
    CHECK(false);
  } catch (const GraphError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
}

TEST_CASE("optimize consistent two pose chain") {
  Graph g;
  g.add_state(Pose::Identity());
  g.add_state(Pose::Identity());
  g.add_factor(Factor::Prior(0, Pose::Identity(), 1e6 * Mat6::Identity()));
  g.add_factor(Factor::Odometry(0, 1, Pose(Mat3::Identity(), Vec3(1, 0, 0)),
                                Mat6::Identity()));
  const auto result = optimize(g);
  CHECK(result.converged);
  CHECK((result.states[1].t - Vec3(1, 0, 0)).norm() < 1e-9);
  CHECK((result.states[1].R - Mat3::Identity()).norm() < 1e-9);
}

TEST_CASE("conflicting odometry and map factor meet at the weighted mean") {
  Graph g;
  g.add_state(Pose::Identity());
  g.add_state(Pose(Mat3::Identity(), Vec3(1, 0, 0)));
  g.add_factor(Factor::Prior(0, Pose::Identity(), 1e9 * Mat6::Identity()));
  g.add_factor(Factor::Odometry(0, 1, Pose(Mat3::Identity(), Vec3(1, 0, 0)),
                                Mat6::Identity()));
  g.add_factor(Factor::Map(1, Pose(Mat3::Identity(), Vec3(1.1, 0, 0)),
                           Mat6::Identity()));
  const auto result = optimize(g);
  CHECK(result.converged);
  CHECK(std::abs(result.states[1].t.x() - 1.05) < 1e-9);
}

TEST_CASE("gradient vanishes at the optimum") {
  Graph g;
  g.add_state(Pose::Identity());
  for (int i = 1; i < 6; ++i) {
    g.add_state(random_pose(0.3, 1.0));
    g.add_factor(Factor::Odometry(
        i - 1, i, lie::compose(random_pose(0.02, 0.02), random_pose(0.3, 1.0)),
        Mat6::Identity()));
  }
  g.add_factor(Factor::Prior(0, Pose::Identity(), 1e6 * Mat6::Identity()));
  const auto result = optimize(g);
  CHECK(result.converged);

  Graph at_opt = g;
  at_opt.states = result.states;
  const AssembledSystem sys = assemble(at_opt);
  const Eigen::VectorXd grad =
      sys.jacobian.transpose() * (sys.weights * sys.residuals);
  CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("odometry only chain reproduces dead reckoning exactly") {
  std::vector<Pose> increments;
  for (int i = 0; i < 10; ++i) increments.push_back(random_pose(0.2, 0.5));

  Graph g;
  Pose x = random_pose();
  g.add_state(x);
  for (const Pose& inc : increments) {
    x = lie::compose(x, inc);
    const int j = g.add_state(x);
    g.add_factor(Factor::Odometry(j - 1, j, inc, Mat6::Identity()));
  }
  const auto result = optimize(g);
  for (size_t k = 0; k < g.states.size(); ++k) {
    CHECK((result.states[k].matrix() - g.states[k].matrix()).norm() == 0.0);
  }
}

TEST_CASE("cost invariant under a global rigid transform") {
  Graph g;
  g.add_state(random_pose());
  g.add_state(random_pose());
  g.add_state(random_pose());
  g.add_factor(Factor::Odometry(0, 1, random_pose(0.2, 0.5), random_spd(1.0)));
  g.add_factor(Factor::Odometry(1, 2, random_pose(0.2, 0.5), random_spd(1.0)));
  g.add_factor(Factor::Map(1, random_pose(), random_spd(1.0)));
  g.add_factor(Factor::Prior(0, g.states[0], Mat6::Identity()));

  const AssembledSystem base = assemble(g);
  const double base_cost =
      base.residuals.dot(Eigen::VectorXd(base.weights * base.residuals));

  const Pose T = random_pose();
  Graph moved = g;
  for (Pose& s : moved.states) s = lie::compose(T, s);
  for (Factor& f : moved.factors) {
    if (!f.binary() && f.kind != FactorKind::kGravity) {
      f.measurement = lie::compose(T, f.measurement);
    }
  }
  const AssembledSystem sys = assemble(moved);
  const double moved_cost =
      sys.residuals.dot(Eigen::VectorXd(sys.weights * sys.residuals));
  CHECK(moved_cost == doctest::Approx(base_cost).epsilon(1e-9));
}

TEST_CASE("single pose marginal equals the prior covariance") {
  Graph g;
  g.add_state(Pose::Identity());
  g.add_factor(Factor::Prior(0, Pose::Identity(), Mat6::Identity()));
  const auto marginals = marginal_covariances(g);
  REQUIRE(marginals.size() == 1);
  CHECK((marginals[0] - Mat6::Identity()).norm() < 1e-10);
}

TEST_CASE("marginal trace grows along an odometry chain") {
  Graph g;
  Pose x = Pose::Identity();
  g.add_state(x);
  g.add_factor(Factor::Prior(0, x, 100.0 * Mat6::Identity()));
  const Pose inc(Mat3::Identity(), Vec3(0.5, 0, 0));
  for (int i = 1; i < 8; ++i) {
    x = lie::compose(x, inc);
    g.add_state(x);
    g.add_factor(Factor::Odometry(i - 1, i, inc, 10.0 * Mat6::Identity()));
  }
  const auto marginals = marginal_covariances(g);
  for (size_t k = 1; k < marginals.size(); ++k) {
    CHECK(marginals[k].trace() >= marginals[k - 1].trace() - 1e-12);
  }
}

TEST_CASE("marginals invert the information matrix on random graphs") {
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<int> num_poses_dist(5, 50);
    const int n = num_poses_dist(rng);

    Graph g;
    Pose x = random_pose();
    g.add_state(x);
    g.add_factor(Factor::Prior(0, x, 10.0 * Mat6::Identity()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 1; i < n; ++i) {
      const Pose inc = random_pose(0.2, 0.5);
      x = lie::compose(x, inc);
      g.add_state(x);
      g.add_factor(Factor::Odometry(i - 1, i, inc, random_spd(1.0)));
      if (u(rng) < 0.3) {
        g.add_factor(Factor::Map(i, x, random_spd(0.5)));
      }
      if (u(rng) < 0.2) {
        g.add_factor(Factor::Gravity(i, x.R.transpose() * Vec3(0, 0, 9.81),
                                     Vec3::UnitZ(), 0.05));
      }
      if (i > 3 && u(rng) < 0.15) {
        std::uniform_int_distribution<int> pick(0, i - 2);
        const int j = pick(rng);
        g.add_factor(Factor::LoopClosure(j, i, lie::between(g.states[j], x),
                                         random_spd(1.0)));
      }
    }

    const AssembledSystem sys = assemble(g);
    const Eigen::MatrixXd lambda = Eigen::MatrixXd(sys.information());
    const auto marginals = marginal_covariances(g);

    // Diagonal blocks of the full inverse.
    const Eigen::MatrixXd sigma = lambda.inverse();
    for (int p = 0; p < n; ++p) {
      const Cov6 block = sigma.block<6, 6>(6 * p, 6 * p);
      CHECK((marginals[p] - block).norm() < 1e-8 * std::max(1.0, block.norm()));
      CHECK((marginals[p] - marginals[p].transpose()).norm() < 1e-10);
    }
    CHECK((lambda * sigma - Eigen::MatrixXd::Identity(6 * n, 6 * n)).norm() <
          1e-6);
  }
}

TEST_CASE("information equals numeric hessian at a zero residual optimum") {
  // Consistent chain: every residual vanishes at the chosen states, so the
  // Gauss-Newton information equals the true Hessian of the total cost.
  Graph g;
  Pose x = random_pose(0.3, 1.0);
  g.add_state(x);
  g.add_factor(Factor::Prior(0, x, 5.0 * Mat6::Identity()));
  for (int i = 1; i < 4; ++i) {
    const Pose inc = random_pose(0.2, 0.5);
    x = lie::compose(x, inc);
    g.add_state(x);
    g.add_factor(Factor::Odometry(i - 1, i, inc, 2.0 * Mat6::Identity()));
    g.add_factor(Factor::Map(i, x, Mat6::Identity()));
  }

  const AssembledSystem sys = assemble(g);
  const Eigen::MatrixXd lambda = Eigen::MatrixXd(sys.information());

  const int dim = 6 * static_cast<int>(g.states.size());
  const auto cost_at = [&](const Eigen::VectorXd& delta) {
    std::vector<Pose> states = g.states;
    for (size_t p = 0; p < states.size(); ++p) {
      states[p] = lie::retract(delta.segment<6>(6 * p), states[p]);
    }
    double cost = 0.0;
    for (const Factor& f : g.factors) {
      const Eigen::VectorXd r = factor_residual(f, states);
      const Eigen::MatrixXd w = f.kind == FactorKind::kGravity
                                    ? Eigen::MatrixXd(f.gf_weight)
                                    : Eigen::MatrixXd(f.information);
      cost += r.dot(w * r);
    }
    return cost;
  };

  const double eps = 1e-4;
  Eigen::MatrixXd numeric(dim, dim);
  for (int a = 0; a < dim; ++a) {
    for (int b = 0; b < dim; ++b) {
      Eigen::VectorXd dpp = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd dpm = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd dmp = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd dmm = Eigen::VectorXd::Zero(dim);
      dpp(a) += eps; dpp(b) += eps;
      dpm(a) += eps; dpm(b) -= eps;
      dmp(a) -= eps; dmp(b) += eps;
      dmm(a) -= eps; dmm(b) -= eps;
      numeric(a, b) = (cost_at(dpp) - cost_at(dpm) - cost_at(dmp) +
                       cost_at(dmm)) /
                      (4.0 * eps * eps);
    }
  }
  // Cost is r^T W r, so its Hessian is 2 J^T W J at zero residual.
  CHECK((2.0 * lambda - numeric).norm() < 1e-5 * numeric.norm());
}

TEST_CASE("graph dump emits one json line per factor") {
  Graph g;
  g.add_state(Pose::Identity());
  g.add_state(Pose(Mat3::Identity(), Vec3(1, 0, 0)));
  g.add_factor(Factor::Odometry(0, 1, Pose(Mat3::Identity(), Vec3(1, 0, 0)),
                                Mat6::Identity()));
  g.add_factor(Factor::Prior(0, Pose::Identity(), Mat6::Identity()));
  const std::string dump = dump_graph(g);
  CHECK(std::count(dump.begin(), dump.end(), '\n') == 2);
  CHECK(dump.find("\"kind\":\"LO\"") != std::string::npos);
  CHECK(dump.find("\"kind\":\"PRIOR\"") != std::string::npos);
}
