#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/features.hpp"
#include "rkhs_rl/qfunc.hpp"
#include "rkhs_rl/variational.hpp"

namespace rkhs_rl::verify {

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_sf(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction applied to lambda).
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// ||a - b|| / ||b||, or ||a - b|| when b vanishes.
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Plain LMP recursion written out independently of the library:
/// theta_{n+1} = theta_n + rho p |e|^{p-1} sign(e) x_n, theta_0 = 0.
/// Column n of the result is theta_{n+1}.
Eigen::MatrixXd lmp_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double p, double rho);

/// Random state with N(0, scale^2) entries.
State random_state(std::mt19937_64& rng, double scale = 1.0);

/// Random trajectory set of size n with actions from `grid`.
TrajectorySet random_trajectories(std::mt19937_64& rng, int n,
                                  std::span<const double> grid,
                                  double scale = 1.0);

/// A random Bellman instance: trajectories, map and a greedy policy of a
/// random Q, with g drawn N(0, 1).
struct RandomInstance {
  RffMap map;
  TrajectorySet traj;
  std::vector<double> grid;
  QFunction policy_q;
  BellmanInstance inst;
  variational::VariationalInstance var;
};

RandomInstance random_instance(std::uint64_t seed, int n, int feature_dim,
                               double alpha, double sigma,
                               std::vector<double> grid = {1.0, 1.5, 2.0});

QFunction random_q(std::mt19937_64& rng, int feature_dim, double scale = 1.0);

}  // namespace rkhs_rl::verify
