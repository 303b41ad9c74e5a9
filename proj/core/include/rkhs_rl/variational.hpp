#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/qfunc.hpp"

namespace rkhs_rl::variational {

/// Trajectory data in RFF coordinates for the classical variational maps.
struct VariationalInstance {
  Eigen::MatrixXd phi_traj;     // D x N, phi(s_i, a_i)
  Eigen::MatrixXd phi_next_mu;  // D x N, phi(s_i', mu(s_i'))
  Eigen::VectorXd g;            // N
  double alpha = 0.0;
  double sigma = 0.0;

  void validate() const;
};

/// Closed-form LSPE map:
///   Phi (K + sI)^{-1} g + s Phi (K + sI)^{-1} K^+ Phi^T Q
///     + alpha Phi (K + sI)^{-1} Phi'^T Q.
/// The result always lies in span(Phi_T); it is the projection of the LSPE
/// minimiser onto that span (the minimiser itself adds the component of Q
/// orthogonal to span(Phi_T)).
QFunction t_lspe(const VariationalInstance& inst, const QFunction& q);

/// Direct ridge solve of the LSPE objective in RFF coordinates (sigma > 0):
///   w' = (Phi Phi^T + sI)^{-1} (Phi (g + alpha Phi'^T w) + s w).
QFunction lspe_direct(const VariationalInstance& inst, const QFunction& q);

/// The same map assembled as g + (alpha Psi) Phi_av^T Q with
/// g = Phi gamma*, Psi = Phi Upsilon*, Phi_av = [Phi_T, Phi'].
/// alpha Upsilon* = (K + sI)^{-1} [s K^+, alpha I] is formed directly, so
/// alpha = 0 needs no special case.
QFunction t_lspe_via_prop1(const VariationalInstance& inst, const QFunction& q);

/// Unique LSTD fixed point Phi (K - alpha Phi'^T Phi)^{-1} g.
QFunction lstd_fixed_point(const VariationalInstance& inst);

/// Residual of the LSTD fixed-point relation
/// (Phi Phi^T - alpha Phi Phi'^T) Q - Phi g, in RFF coordinates.
Eigen::VectorXd lstd_residual(const VariationalInstance& inst, const QFunction& q);

/// Bellman-residual map results.
struct BrResult {
  QFunction direct;          // minimiser via the D x D ridge solve
  QFunction reconstruction;  // g + (alpha Psi) Phi_av^T Q with BR gamma*, Upsilon*
  QFunction complement;      // component of Q orthogonal to span(Phi_TD)
  double mismatch = 0.0;     // ||direct - reconstruction|| / (1 + ||direct||)
  double corrected_mismatch = 0.0;  // same, reconstruction + complement
};

/// BR map (sigma > 0). Reports, without asserting, any mismatch between the
/// direct solve and the closed-form reconstruction.
BrResult t_br(const VariationalInstance& inst, const QFunction& q);

/// Phi (K + sI)^{-1} g + alpha Phi (K + sI)^{-1} Phi'^T Q.
QFunction prop1iii_map(const VariationalInstance& inst, const QFunction& q);

// Finite MDPs ---------------------------------------------------------------

/// Exact classical Bellman maps on a finite MDP with loss tables. Q-tables
/// are n_states x n_actions.
class FiniteMdp {
 public:
  /// transitions[s * n_actions + a] is the distribution over next states.
  FiniteMdp(int n_states, int n_actions, std::vector<Eigen::VectorXd> transitions,
            Eigen::MatrixXd loss, double alpha);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double alpha() const { return alpha_; }

  /// g(s,a) + alpha E[Q(s', mu(s'))]; policy[s] is an action index.
  Eigen::MatrixXd apply_policy(const Eigen::MatrixXd& q,
                               const std::vector<int>& policy) const;

  /// g(s,a) + alpha E[min_a' Q(s', a')].
  Eigen::MatrixXd apply_greedy(const Eigen::MatrixXd& q) const;

  /// Picard iteration of apply_greedy from zero; returns the final table.
  Eigen::MatrixXd value_iteration(int iterations) const;

 private:
  Eigen::MatrixXd apply_with(const Eigen::VectorXd& continuation) const;

  int n_states_;
  int n_actions_;
  std::vector<Eigen::VectorXd> transitions_;
  Eigen::MatrixXd loss_;
  double alpha_;
};

}  // namespace rkhs_rl::variational
