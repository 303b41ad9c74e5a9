#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/qfunc.hpp"
#include "rkhs_rl/verify/oracles.hpp"
#include "test_util.hpp"

using namespace rkhs_rl;
using verify::random_instance;
using verify::random_q;

namespace {

// (K + sigma I)^{-1} by a dense LU inverse, independent of the library solve.
Eigen::MatrixXd ridge_inverse(const Eigen::MatrixXd& phi, double sigma) {
  const Eigen::MatrixXd k = phi.transpose() * phi;
  return (k + sigma * Eigen::MatrixXd::Identity(k.rows(), k.cols())).fullPivLu().inverse();
}

}  // namespace

TEST(BuildPsi, SingleSampleNoRidge) {
  const RffMap m = sample_rff(1, 32, 1.0);
  const TrajectorySet t{{State(0.1, 0.2, 0.3, 0.4), 1.5, State::Zero()}};
  const Eigen::VectorXd phi = featurize(m, t[0].point());
  EXPECT_TRUE(vectors_near(build_psi(t, m, 0.0), phi / phi.squaredNorm(), 1e-14));
}

TEST(BuildPsi, LargeRidgeShrinks) {
  std::mt19937_64 rng(2);
  const RffMap m = sample_rff(2, 32, 1.0);
  const TrajectorySet t = verify::random_trajectories(rng, 4, std::vector<double>{1.0, 2.0});
  std::vector<Point> pts;
  for (const auto& x : t) pts.push_back(x.point());
  const Eigen::MatrixXd psi = build_psi(t, m, 1e8);
  EXPECT_LE(psi.norm(), feature_matrix(m, pts).norm() / 1e8);
}

TEST(BuildPsi, MatchesDenseOracle) {
  std::mt19937_64 rng(3);
  const RffMap m = sample_rff(3, 48, 1.0);
  const TrajectorySet t = verify::random_trajectories(rng, 3, std::vector<double>{1.0, 1.5, 2.0});
  std::vector<Point> pts;
  for (const auto& x : t) pts.push_back(x.point());
  const Eigen::MatrixXd phi = feature_matrix(m, pts);
  for (double sigma : {0.0, 0.1, 1.0}) {
    const Eigen::MatrixXd psi = build_psi(t, m, sigma);
    const Eigen::MatrixXd k = phi.transpose() * phi;
    EXPECT_TRUE(vectors_near(phi.transpose() * psi, ridge_inverse(phi, sigma) * k, 1e-8));
  }
}

TEST(BuildPsi, SingularWithoutRidgeNamesCondition) {
  const RffMap m = sample_rff(4, 16, 1.0);
  const Transition t{State(1, 1, 1, 1), 1.0, State::Zero()};
  try {
    build_psi(TrajectorySet{t, t}, m, 0.0);
    FAIL() << "expected SingularSystem";
  } catch (const SingularSystem& e) {
    EXPECT_GT(e.condition(), 1e12);
    EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
  }
}

TEST(BuildPsi, EmptyThrows) {
  const RffMap m = sample_rff(4, 16, 1.0);
  EXPECT_THROW(build_psi(TrajectorySet{}, m, 0.1), InvalidInput);
}

TEST(ApplyBellmanMu, AlphaZeroOrZeroQGivesG) {
  const auto ri = random_instance(5, 4, 64, 0.0, 0.1);
  std::mt19937_64 rng(5);
  const Eigen::VectorXd g = g_representation(ri.inst);
  EXPECT_TRUE(vectors_near(apply_bellman_mu(ri.inst, random_q(rng, 64)).weights, g, 1e-14));
  const auto rj = random_instance(6, 4, 64, 0.9, 0.1);
  EXPECT_TRUE(vectors_near(apply_bellman_mu(rj.inst, QFunction::zero(64)).weights,
                           g_representation(rj.inst), 1e-14));
}

TEST(ApplyBellmanMu, PointwiseExpansion) {
  const auto ri = random_instance(7, 4, 64, 0.9, 0.1);
  std::mt19937_64 rng(7);
  const QFunction q = random_q(rng, 64);
  const QFunction tq = apply_bellman_mu(ri.inst, q);
  const Eigen::MatrixXd inv = ridge_inverse(ri.inst.phi_traj, 0.1);
  const Eigen::VectorXd c = inv * ri.inst.g_values;
  const Policy mu = greedy_policy(ri.policy_q, ri.grid, ri.map);
  for (int p = 0; p < 10; ++p) {
    const Point z{verify::random_state(rng), ri.grid[static_cast<std::size_t>(p % 3)]};
    const Eigen::VectorXd kz = ri.inst.phi_traj.transpose() * featurize(ri.map, z);
    double expected = c.dot(kz);  // g(z)
    const Eigen::VectorXd psi_z = inv * kz;  // psi_i(z)
    for (std::size_t i = 0; i < ri.traj.size(); ++i) {
      const State& s1 = ri.traj[i].next_state;
      expected += 0.9 * psi_z(static_cast<Eigen::Index>(i)) * q(ri.map, {s1, mu(s1)});
    }
    EXPECT_NEAR(tq(ri.map, z), expected, 1e-8);
  }
}

TEST(ApplyBellmanMu, DimensionMismatchThrows) {
  const auto ri = random_instance(8, 3, 16, 0.5, 0.1);
  EXPECT_THROW(apply_bellman_mu(ri.inst, QFunction::zero(17)), InvalidInput);
}

TEST(ApplyBellmanMu, Affine) {
  const auto ri = random_instance(9, 5, 64, 0.9, 0.1);
  std::mt19937_64 rng(9);
  const QFunction a = random_q(rng, 64);
  const QFunction b = random_q(rng, 64);
  const double lam = 0.3;
  const QFunction mix{lam * a.weights + (1 - lam) * b.weights};
  EXPECT_TRUE(vectors_near(apply_bellman_mu(ri.inst, mix).weights,
                           lam * apply_bellman_mu(ri.inst, a).weights +
                               (1 - lam) * apply_bellman_mu(ri.inst, b).weights,
                           1e-10));
}

TEST(ApplyBellmanGreedy, SingletonGridEqualsFixedPolicy) {
  const std::vector<double> grid{1.5};
  const auto ri = random_instance(10, 4, 32, 0.9, 0.1, grid);
  std::mt19937_64 rng(10);
  const QFunction q = random_q(rng, 32);
  EXPECT_TRUE(vectors_near(apply_bellman_greedy(ri.inst, q, grid, ri.map).weights,
                           apply_bellman_mu(ri.inst, q).weights, 1e-12));
}

TEST(ApplyBellmanGreedy, AlphaZeroGivesG) {
  const auto ri = random_instance(11, 4, 32, 0.0, 0.1);
  std::mt19937_64 rng(11);
  EXPECT_TRUE(vectors_near(apply_bellman_greedy(ri.inst, random_q(rng, 32), ri.grid, ri.map).weights,
                           g_representation(ri.inst), 1e-14));
}

TEST(ApplyBellmanGreedy, VecinfDominatesEveryPolicy) {
  const auto ri = random_instance(12, 4, 32, 0.9, 0.1);
  std::mt19937_64 rng(12);
  const QFunction q = random_q(rng, 32);
  std::vector<State> av;
  for (const auto& t : ri.traj) av.push_back(t.next_state);
  const Eigen::VectorXd inf = vecinf(q, av, ri.grid, ri.map);
  const int n = 4;
  const int na = 3;
  Eigen::VectorXd attained = Eigen::VectorXd::Constant(n, INFINITY);
  for (int code = 0; code < 81; ++code) {
    int c = code;
    for (int i = 0; i < n; ++i, c /= na) {
      const double v = q(ri.map, {av[static_cast<std::size_t>(i)], ri.grid[static_cast<std::size_t>(c % na)]});
      EXPECT_LE(inf(i), v);
      attained(i) = std::min(attained(i), v);
    }
  }
  EXPECT_TRUE(vectors_near(inf, attained, 0.0));
}

TEST(GreedyAction, TiesGoToSmallestAction) {
  const RffMap m = sample_rff(1, 16, 1.0);
  const std::vector<double> grid{1.0, 1.25, 1.5};
  EXPECT_EQ(greedy_action(QFunction::zero(16), State::Zero(), grid, m), 1.0);
  EXPECT_THROW(greedy_action(QFunction::zero(16), State::Zero(), std::vector<double>{}, m), InvalidInput);
}

TEST(NormalVector, AlphaZeroIsFeature) {
  const auto ri = random_instance(13, 3, 32, 0.0, 0.1);
  const Point z{State(0.2, 0.1, -0.3, 0.5), 2.0};
  EXPECT_TRUE(vectors_near(normal_vector_h(ri.inst, z, ri.map), featurize(ri.map, z), 0.0));
}

TEST(NormalVector, InnerProductExpansion) {
  const auto ri = random_instance(14, 5, 64, 0.9, 0.1);
  std::mt19937_64 rng(14);
  const Policy mu = greedy_policy(ri.policy_q, ri.grid, ri.map);
  for (int trial = 0; trial < 10; ++trial) {
    const QFunction q = random_q(rng, 64);
    const Point z{verify::random_state(rng), 1.5};
    const Eigen::VectorXd h = normal_vector_h(ri.inst, z, ri.map);
    const Eigen::VectorXd psi_z = ri.inst.psi.transpose() * featurize(ri.map, z);
    double expected = q(ri.map, z);
    for (std::size_t i = 0; i < ri.traj.size(); ++i) {
      const State& s1 = ri.traj[i].next_state;
      expected -= 0.9 * psi_z(static_cast<Eigen::Index>(i)) * q(ri.map, {s1, mu(s1)});
    }
    EXPECT_NEAR(q.weights.dot(h), expected, 1e-10);
  }
}

TEST(NormalVector, VanishingCoefficientLeavesFeature) {
  Eigen::VectorXd phi_star(3);
  phi_star << 1.0, 0.0, 0.0;
  Eigen::MatrixXd psi(3, 1);
  psi << 0.0, 0.7, -0.2;  // orthogonal to phi_star
  Eigen::MatrixXd av(3, 1);
  av << 0.4, 0.4, 0.4;
  EXPECT_TRUE(vectors_near(hyperplane_normal(psi, av, 0.9, phi_star), phi_star, 0.0));
}

TEST(HyperplaneLoss, Values) {
  Eigen::VectorXd h(3);
  h << 1.0, 2.0, -1.0;
  QFunction q{Eigen::Vector3d(1.0, 1.0, 1.0)};
  EXPECT_EQ(hyperplane_loss(q, h, 2.0), 0.0);
  EXPECT_EQ(hyperplane_loss(QFunction::zero(3), h, 2.0), 2.0);
}

TEST(HyperplaneLoss, InvariantToOrthogonalPerturbation) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd h = random_q(rng, 10).weights;
    const QFunction q = random_q(rng, 10);
    Eigen::VectorXd r = random_q(rng, 10).weights;
    r -= (r.dot(h) / h.squaredNorm()) * h;
    EXPECT_NEAR(hyperplane_loss({q.weights + r}, h, 0.3), hyperplane_loss(q, h, 0.3), 1e-10);
  }
}

TEST(SgdStep, OnHyperplaneUnchanged) {
  Eigen::VectorXd h(2);
  h << 1.0, 1.0;
  const QFunction q{Eigen::Vector2d(0.5, 0.5)};
  EXPECT_EQ(sgd_step(q, h, 1.0, 0.3).weights, q.weights);
}

TEST(SgdStep, ExactProjectionAndIdempotence) {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd h = random_q(rng, 12).weights;
    const QFunction q = random_q(rng, 12);
    const double eta = 1.0 / h.squaredNorm();
    const QFunction once = sgd_step(q, h, 0.7, eta);
    EXPECT_NEAR(once.weights.dot(h) - 0.7, 0.0, 1e-10);
    EXPECT_TRUE(vectors_near(sgd_step(once, h, 0.7, eta).weights, once.weights, 1e-12));
  }
}

TEST(SgdStep, LossDecreasesBelowCriticalRate) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> frac(0.01, 0.99);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd h = random_q(rng, 8).weights;
    const QFunction q = random_q(rng, 8);
    const double eta = frac(rng) * 2.0 / h.squaredNorm();
    EXPECT_LT(hyperplane_loss(sgd_step(q, h, -0.4, eta), h, -0.4), hyperplane_loss(q, h, -0.4));
  }
}

TEST(SgdStep, ZeroNormalAndBadRate) {
  const QFunction q{Eigen::Vector2d(1.0, 2.0)};
  EXPECT_EQ(sgd_step(q, Eigen::Vector2d::Zero(), 5.0, 0.1).weights, q.weights);
  EXPECT_THROW(sgd_step(q, Eigen::Vector2d::Ones(), 5.0, 0.0), InvalidInput);
}

TEST(LipschitzBeta, AlphaZeroIsZero) {
  const auto ri = random_instance(18, 3, 16, 0.0, 0.1);
  std::vector<State> av;
  for (const auto& t : ri.traj) av.push_back(t.next_state);
  EXPECT_EQ(lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::exact), 0.0);
}

TEST(LipschitzBeta, SingleStateClosedForm) {
  const auto ri = random_instance(19, 1, 32, 0.9, 0.1);
  const std::vector<State> av{ri.traj[0].next_state};
  const double k_psi = (ri.inst.psi.transpose() * ri.inst.psi)(0, 0);
  double best = 0.0;
  for (double a : ri.grid) best = std::max(best, featurize(ri.map, {av[0], a}).squaredNorm());
  EXPECT_NEAR(lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::exact),
              0.9 * std::sqrt(k_psi * best), 1e-12);
}

TEST(LipschitzBeta, UpperBoundDominatesExact) {
  for (std::uint64_t s = 20; s < 26; ++s) {
    const auto ri = random_instance(s, 4, 32, 0.9, 0.1);
    std::vector<State> av;
    for (const auto& t : ri.traj) av.push_back(t.next_state);
    EXPECT_GE(lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::upper_bound),
              lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::exact) - 1e-12);
  }
}

TEST(LipschitzBeta, BoundsTheMap) {
  const auto ri = random_instance(26, 4, 64, 0.9, 0.1);
  std::vector<State> av;
  for (const auto& t : ri.traj) av.push_back(t.next_state);
  const double beta = lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::exact);
  std::mt19937_64 rng(26);
  for (int i = 0; i < 50; ++i) {
    const QFunction a = random_q(rng, 64);
    const QFunction b = random_q(rng, 64);
    EXPECT_LE((apply_bellman_mu(ri.inst, a).weights - apply_bellman_mu(ri.inst, b).weights).norm(),
              beta * (a.weights - b.weights).norm() + 1e-10);
  }
}

TEST(LipschitzBeta, BudgetExceeded) {
  const std::vector<double> grid{1.0, 1.25, 1.5, 1.75, 2.0};
  const auto ri = random_instance(27, 8, 16, 0.9, 0.1, grid);
  std::vector<State> av;
  for (const auto& t : ri.traj) av.push_back(t.next_state);
  EXPECT_THROW(lipschitz_beta(ri.inst, grid, av, ri.map, BetaMode::exact), BudgetExceeded);
  EXPECT_NO_THROW(lipschitz_beta(ri.inst, grid, av, ri.map, BetaMode::upper_bound));
}

TEST(LipschitzBeta, ContractionIterates) {
  int contractive = 0;
  for (std::uint64_t s = 30; s < 40; ++s) {
    const auto ri = random_instance(s, 3, 32, 0.5, 1.0);
    std::vector<State> av;
    for (const auto& t : ri.traj) av.push_back(t.next_state);
    const double beta = lipschitz_beta(ri.inst, ri.grid, av, ri.map, BetaMode::exact);
    if (beta >= 1.0) continue;
    ++contractive;
    std::mt19937_64 rng(s);
    QFunction prev = random_q(rng, 32);
    QFunction cur = apply_bellman_mu(ri.inst, prev);
    for (int k = 0; k < 30; ++k) {
      const QFunction next = apply_bellman_mu(ri.inst, cur);
      EXPECT_LE((next.weights - cur.weights).norm(),
                beta * (cur.weights - prev.weights).norm() + 1e-12);
      prev = cur;
      cur = next;
    }
  }
  EXPECT_GT(contractive, 0);
}
