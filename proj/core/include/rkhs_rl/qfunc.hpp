#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/features.hpp"

namespace rkhs_rl {

/// Q-function held as a weight vector over RFF coordinates:
/// Q(z) = weights . featurize(z).
struct QFunction {
  Eigen::VectorXd weights;

  static QFunction zero(int feature_dim) {
    return {Eigen::VectorXd::Zero(feature_dim)};
  }
  double operator()(const RffMap& map, const Point& z) const;
};

/// One trajectory sample (s, a, s').
struct Transition {
  State state;
  double action;
  State next_state;

  Point point() const { return {state, action}; }
  bool operator==(const Transition&) const = default;
};

using TrajectorySet = std::vector<Transition>;

/// Deterministic stationary policy s -> a.
using Policy = std::function<double(const State&)>;

/// argmin over the grid of Q(s, a); ties go to the smallest action.
double greedy_action(const QFunction& q, const State& s,
                     std::span<const double> action_grid, const RffMap& map);

/// Greedy policy of a frozen copy of `q`. `map` must outlive the closure.
Policy greedy_policy(QFunction q, std::vector<double> action_grid,
                     const RffMap& map);

/// Online instantiation of the nonparametric Bellman map built from a
/// trajectory set: Psi = Phi (K + sigma I)^{-1}, and the successor-state
/// features under a fixed policy.
struct BellmanInstance {
  Eigen::MatrixXd psi;        // D x N
  Eigen::MatrixXd phi_traj;   // D x N, columns phi(s_i, a_i)
  Eigen::MatrixXd phi_av_mu;  // D x N, columns phi(s_i', mu(s_i'))
  Eigen::VectorXd g_values;   // N one-step losses at (s_i, a_i)
  std::vector<State> av_states;  // s_i'
  double alpha = 0.0;
  double sigma = 0.0;

  Eigen::Index size() const { return psi.cols(); }
  Eigen::Index feature_dim() const { return psi.rows(); }
};

/// Phi_T (K_T + sigma I)^{-1}, computed with a symmetric solve.
Eigen::MatrixXd build_psi(const Eigen::MatrixXd& phi_traj, double sigma);
Eigen::MatrixXd build_psi(const TrajectorySet& traj, const RffMap& map,
                          double sigma);

/// Assembles the instance for `traj` under `policy`. `g_values` may be empty
/// when only the hyperplane machinery is needed.
BellmanInstance make_instance(const TrajectorySet& traj, const RffMap& map,
                              double sigma, double alpha, const Policy& policy,
                              Eigen::VectorXd g_values = {});

/// RFF weights of g, interpolated as Phi_T c with (K + sigma I) c = g_values.
Eigen::VectorXd g_representation(const BellmanInstance& inst);

/// g + scaled_psi * phi_av^T q, the shared algebraic core of every map in
/// this family. `scaled_psi` already carries the discount factor.
QFunction apply_bellman(const Eigen::VectorXd& g_repr,
                        const Eigen::MatrixXd& scaled_psi,
                        const Eigen::MatrixXd& phi_av, const QFunction& q);

/// Policy-evaluation map: g + alpha Psi Phi_av_mu^T Q.
QFunction apply_bellman_mu(const BellmanInstance& inst, const QFunction& q);

/// Entry i is min over the grid of Q(av_states[i], a).
Eigen::VectorXd vecinf(const QFunction& q, std::span<const State> av_states,
                       std::span<const double> action_grid, const RffMap& map);

/// Greedy map: g + alpha Psi vecinf(Q).
QFunction apply_bellman_greedy(const BellmanInstance& inst, const QFunction& q,
                               std::span<const double> action_grid,
                               const RffMap& map);

/// Normal vector of the hyperplane {Q : (T(Q) - Q)(z*) = 0}:
///   h = phi(z*) - alpha sum_i <psi_i, phi(z*)> phi(s_i', mu(s_i')).
Eigen::VectorXd normal_vector_h(const BellmanInstance& inst,
                                const Point& z_star, const RffMap& map);

/// The same normal vector from raw blocks: phi_star - alpha phi_av_mu psi^T phi_star.
Eigen::VectorXd hyperplane_normal(const Eigen::MatrixXd& psi,
                                  const Eigen::MatrixXd& phi_av_mu, double alpha,
                                  const Eigen::VectorXd& phi_star);

/// 0.5 (<q, h> - g)^2
double hyperplane_loss(const QFunction& q, const Eigen::VectorXd& h,
                       double g_at_star);

/// q - eta (<q, h> - g) h. A zero h leaves q unchanged.
QFunction sgd_step(const QFunction& q, const Eigen::VectorXd& h,
                   double g_at_star, double eta);

enum class BetaMode { exact, upper_bound };

/// Lipschitz constant alpha (||K_Psi|| sup_mu ||K_av_mu||)^{1/2} of the maps.
///
/// Exact mode enumerates every deterministic action assignment over
/// `av_states` and throws BudgetExceeded past `budget` assignments. The upper
/// bound replaces the sup by N_av max_{i,a} phi(s_i,a).phi(s_i,a).
double lipschitz_beta(const BellmanInstance& inst,
                      std::span<const double> action_grid,
                      std::span<const State> av_states, const RffMap& map,
                      BetaMode mode, double budget = 1e5);

}  // namespace rkhs_rl
