#include "rkhs_rl/variational.hpp"

#include <cmath>
#include <sstream>

#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/linalg.hpp"

namespace rkhs_rl::variational {

void VariationalInstance::validate() const {
  const auto n = phi_traj.cols();
  if (n < 1) throw InvalidInput("VariationalInstance: empty trajectory set");
  if (phi_next_mu.cols() != n || phi_next_mu.rows() != phi_traj.rows() ||
      g.size() != n) {
    throw InvalidInput("VariationalInstance: inconsistent shapes");
  }
  if (!phi_traj.allFinite() || !phi_next_mu.allFinite() || !g.allFinite()) {
    throw InvalidInput("VariationalInstance: non-finite entries");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw InvalidInput("VariationalInstance: alpha must lie in [0, 1)");
  }
  if (!(sigma >= 0.0)) throw InvalidInput("VariationalInstance: sigma must be >= 0");
}

namespace {

void check_q(const VariationalInstance& inst, const QFunction& q) {
  if (q.weights.size() != inst.phi_traj.rows()) {
    throw InvalidInput("QFunction dimension does not match instance");
  }
}

Eigen::MatrixXd hstack(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

QFunction t_lspe(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const Eigen::MatrixXd k = gram(phi);
  Eigen::VectorXd rhs = inst.g + inst.alpha * (inst.phi_next_mu.transpose() * q.weights);
  if (inst.sigma > 0.0) {
    rhs += inst.sigma * (linalg::pinv_psd(k) * (phi.transpose() * q.weights));
  }
  const Eigen::VectorXd c = linalg::solve_ridge(k, inst.sigma, rhs);
  return {phi * c};
}

QFunction lspe_direct(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  if (!(inst.sigma > 0.0)) throw InvalidInput("lspe_direct: requires sigma > 0");
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const Eigen::VectorXd target = inst.g + inst.alpha * (inst.phi_next_mu.transpose() * q.weights);
  const Eigen::MatrixXd outer = phi * phi.transpose();
  const Eigen::VectorXd rhs = phi * target + inst.sigma * q.weights;
  return {linalg::solve_ridge(outer, inst.sigma, rhs)};
}

QFunction t_lspe_via_prop1(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const auto n = phi.cols();
  const Eigen::MatrixXd k = gram(phi);
  const Eigen::VectorXd gamma = linalg::solve_ridge(k, inst.sigma, inst.g);

  // alpha * Upsilon* = (K + sI)^{-1} [s K^+, alpha I]
  Eigen::MatrixXd blocks(n, 2 * n);
  if (inst.sigma > 0.0) {
    blocks.leftCols(n) = inst.sigma * linalg::pinv_psd(k);
  } else {
    blocks.leftCols(n).setZero();
  }
  blocks.rightCols(n) = inst.alpha * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd scaled_upsilon = linalg::solve_ridge(k, inst.sigma, blocks);

  const Eigen::VectorXd g_repr = phi * gamma;
  const Eigen::MatrixXd scaled_psi = phi * scaled_upsilon;
  const Eigen::MatrixXd phi_av = hstack(phi, inst.phi_next_mu);
  return apply_bellman(g_repr, scaled_psi, phi_av, q);
}

QFunction lstd_fixed_point(const VariationalInstance& inst) {
  inst.validate();
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const Eigen::MatrixXd m = gram(phi) - inst.alpha * (inst.phi_next_mu.transpose() * phi);
  const Eigen::VectorXd c = linalg::solve_general(m, inst.g);
  return {phi * c};
}

Eigen::VectorXd lstd_residual(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  const Eigen::MatrixXd& phi = inst.phi_traj;
  return phi * (phi.transpose() * q.weights) -
         inst.alpha * (phi * (inst.phi_next_mu.transpose() * q.weights)) -
         phi * inst.g;
}

BrResult t_br(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  if (!(inst.sigma > 0.0)) throw InvalidInput("t_br: requires sigma > 0");
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const auto n = phi.cols();
  const double s = inst.sigma;
  const double a = inst.alpha;
  const Eigen::MatrixXd phi_td = phi - a * inst.phi_next_mu;
  const Eigen::MatrixXd k_td = gram(phi_td);
  const Eigen::MatrixXd k_td_pinv = linalg::pinv_psd(k_td);

  BrResult out;
  {
    const Eigen::MatrixXd outer = phi_td * phi_td.transpose();
    const Eigen::VectorXd rhs = phi_td * inst.g + s * q.weights;
    out.direct = {linalg::solve_ridge(outer, s, rhs)};
  }
  {
    const Eigen::VectorXd gamma = linalg::solve_ridge(k_td, s, inst.g);
    // alpha * Upsilon* = (K_TD + sI)^{-1} K_TD^+ [s I, -alpha s I]
    Eigen::MatrixXd blocks(n, 2 * n);
    blocks.leftCols(n) = s * k_td_pinv;
    blocks.rightCols(n) = -a * s * k_td_pinv;
    const Eigen::MatrixXd scaled_upsilon = linalg::solve_ridge(k_td, s, blocks);
    const Eigen::MatrixXd phi_av = hstack(phi, inst.phi_next_mu);
    out.reconstruction = apply_bellman(phi_td * gamma, phi_td * scaled_upsilon, phi_av, q);
  }
  out.complement = {q.weights - phi_td * (k_td_pinv * (phi_td.transpose() * q.weights))};

  const double scale = 1.0 + out.direct.weights.norm();
  out.mismatch = (out.direct.weights - out.reconstruction.weights).norm() / scale;
  out.corrected_mismatch =
      (out.direct.weights - out.reconstruction.weights - out.complement.weights).norm() / scale;
  return out;
}

QFunction prop1iii_map(const VariationalInstance& inst, const QFunction& q) {
  inst.validate();
  check_q(inst, q);
  const Eigen::MatrixXd& phi = inst.phi_traj;
  const Eigen::MatrixXd k = gram(phi);
  const Eigen::VectorXd rhs = inst.g + inst.alpha * (inst.phi_next_mu.transpose() * q.weights);
  return {phi * linalg::solve_ridge(k, inst.sigma, rhs)};
}

// Finite MDPs ---------------------------------------------------------------

FiniteMdp::FiniteMdp(int n_states, int n_actions,
                     std::vector<Eigen::VectorXd> transitions,
                     Eigen::MatrixXd loss, double alpha)
    : n_states_(n_states),
      n_actions_(n_actions),
      transitions_(std::move(transitions)),
      loss_(std::move(loss)),
      alpha_(alpha) {
  if (n_states_ < 1 || n_actions_ < 1) {
    throw InvalidInput("FiniteMdp: need at least one state and one action");
  }
  if (static_cast<int>(transitions_.size()) != n_states_ * n_actions_) {
    throw InvalidInput("FiniteMdp: need one distribution per (state, action)");
  }
  if (loss_.rows() != n_states_ || loss_.cols() != n_actions_) {
    throw InvalidInput("FiniteMdp: loss table must be n_states x n_actions");
  }
  if (!(alpha_ >= 0.0 && alpha_ < 1.0)) throw InvalidInput("FiniteMdp: alpha must lie in [0, 1)");
  for (std::size_t i = 0; i < transitions_.size(); ++i) {
    const auto& p = transitions_[i];
    if (p.size() != n_states_ || (p.array() < 0.0).any() ||
        std::abs(p.sum() - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "FiniteMdp: row " << i << " is not a probability distribution";
      throw InvalidInput(os.str());
    }
  }
}

Eigen::MatrixXd FiniteMdp::apply_with(const Eigen::VectorXd& continuation) const {
  Eigen::MatrixXd out(n_states_, n_actions_);
  for (int s = 0; s < n_states_; ++s) {
    for (int a = 0; a < n_actions_; ++a) {
      const auto& p = transitions_[static_cast<std::size_t>(s * n_actions_ + a)];
      out(s, a) = loss_(s, a) + alpha_ * p.dot(continuation);
    }
  }
  return out;
}

Eigen::MatrixXd FiniteMdp::apply_policy(const Eigen::MatrixXd& q,
                                        const std::vector<int>& policy) const {
  if (q.rows() != n_states_ || q.cols() != n_actions_ ||
      static_cast<int>(policy.size()) != n_states_) {
    throw InvalidInput("FiniteMdp::apply_policy: shape mismatch");
  }
  Eigen::VectorXd v(n_states_);
  for (int s = 0; s < n_states_; ++s) {
    const int a = policy[static_cast<std::size_t>(s)];
    if (a < 0 || a >= n_actions_) throw InvalidInput("FiniteMdp: policy action out of range");
    v(s) = q(s, a);
  }
  return apply_with(v);
}

Eigen::MatrixXd FiniteMdp::apply_greedy(const Eigen::MatrixXd& q) const {
  if (q.rows() != n_states_ || q.cols() != n_actions_) {
    throw InvalidInput("FiniteMdp::apply_greedy: shape mismatch");
  }
  return apply_with(q.rowwise().minCoeff());
}

Eigen::MatrixXd FiniteMdp::value_iteration(int iterations) const {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n_states_, n_actions_);
  for (int i = 0; i < iterations; ++i) q = apply_greedy(q);
  return q;
}

}  // namespace rkhs_rl::variational
