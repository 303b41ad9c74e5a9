#include "rkhs_rl/qfunc.hpp"

#include <cmath>
#include <sstream>

#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/linalg.hpp"

namespace rkhs_rl {

namespace {

void check_instance(const BellmanInstance& inst) {
  const auto n = inst.psi.cols();
  const auto d = inst.psi.rows();
  if (n < 1) throw InvalidInput("BellmanInstance: empty trajectory set");
  if (inst.phi_traj.cols() != n || inst.phi_av_mu.cols() != n ||
      inst.phi_traj.rows() != d || inst.phi_av_mu.rows() != d) {
    throw InvalidInput("BellmanInstance: inconsistent matrix shapes");
  }
  if (inst.g_values.size() != 0 && inst.g_values.size() != n) {
    throw InvalidInput("BellmanInstance: g_values length mismatch");
  }
  if (!inst.av_states.empty() &&
      static_cast<Eigen::Index>(inst.av_states.size()) != n) {
    throw InvalidInput("BellmanInstance: av_states length mismatch");
  }
}

void check_q(const QFunction& q, Eigen::Index d) {
  if (q.weights.size() != d) {
    std::ostringstream os;
    os << "QFunction has " << q.weights.size() << " weights, expected " << d;
    throw InvalidInput(os.str());
  }
}

}  // namespace

double QFunction::operator()(const RffMap& map, const Point& z) const {
  return weights.dot(featurize(map, z));
}

double greedy_action(const QFunction& q, const State& s,
                     std::span<const double> action_grid, const RffMap& map) {
  if (action_grid.empty()) throw InvalidInput("greedy_action: empty action grid");
  double best_a = action_grid[0];
  double best_q = q(map, {s, best_a});
  for (std::size_t i = 1; i < action_grid.size(); ++i) {
    const double a = action_grid[i];
    const double v = q(map, {s, a});
    if (v < best_q || (v == best_q && a < best_a)) {
      best_q = v;
      best_a = a;
    }
  }
  return best_a;
}

Policy greedy_policy(QFunction q, std::vector<double> action_grid,
                     const RffMap& map) {
  return [q = std::move(q), grid = std::move(action_grid),
          m = &map](const State& s) { return greedy_action(q, s, grid, *m); };
}

Eigen::MatrixXd build_psi(const Eigen::MatrixXd& phi_traj, double sigma) {
  if (phi_traj.cols() < 1) throw InvalidInput("build_psi: empty trajectory set");
  const Eigen::MatrixXd k = gram(phi_traj);
  // Psi^T = (K + sigma I)^{-1} Phi^T since K + sigma I is symmetric.
  return linalg::solve_ridge(k, sigma, phi_traj.transpose()).transpose();
}

Eigen::MatrixXd build_psi(const TrajectorySet& traj, const RffMap& map,
                          double sigma) {
  std::vector<Point> pts;
  pts.reserve(traj.size());
  for (const auto& t : traj) pts.push_back(t.point());
  return build_psi(feature_matrix(map, pts), sigma);
}

BellmanInstance make_instance(const TrajectorySet& traj, const RffMap& map,
                              double sigma, double alpha, const Policy& policy,
                              Eigen::VectorXd g_values) {
  if (traj.empty()) throw InvalidInput("make_instance: empty trajectory set");
  if (g_values.size() != 0 &&
      g_values.size() != static_cast<Eigen::Index>(traj.size())) {
    throw InvalidInput("make_instance: g_values length mismatch");
  }
  std::vector<Point> here;
  std::vector<Point> next;
  BellmanInstance inst;
  here.reserve(traj.size());
  next.reserve(traj.size());
  inst.av_states.reserve(traj.size());
  for (const auto& t : traj) {
    here.push_back(t.point());
    next.push_back({t.next_state, policy(t.next_state)});
    inst.av_states.push_back(t.next_state);
  }
  inst.phi_traj = feature_matrix(map, here);
  inst.phi_av_mu = feature_matrix(map, next);
  inst.psi = build_psi(inst.phi_traj, sigma);
  inst.g_values = std::move(g_values);
  inst.alpha = alpha;
  inst.sigma = sigma;
  return inst;
}

Eigen::VectorXd g_representation(const BellmanInstance& inst) {
  check_instance(inst);
  if (inst.g_values.size() != inst.size()) {
    throw InvalidInput("g_representation: instance carries no g_values");
  }
  const Eigen::MatrixXd k = gram(inst.phi_traj);
  const Eigen::VectorXd c = linalg::solve_ridge(k, inst.sigma, inst.g_values);
  return inst.phi_traj * c;
}

QFunction apply_bellman(const Eigen::VectorXd& g_repr,
                        const Eigen::MatrixXd& scaled_psi,
                        const Eigen::MatrixXd& phi_av, const QFunction& q) {
  const auto d = g_repr.size();
  if (scaled_psi.rows() != d || phi_av.rows() != d ||
      scaled_psi.cols() != phi_av.cols()) {
    throw InvalidInput("apply_bellman: dimension mismatch");
  }
  check_q(q, d);
  return {g_repr + scaled_psi * (phi_av.transpose() * q.weights)};
}

QFunction apply_bellman_mu(const BellmanInstance& inst, const QFunction& q) {
  check_instance(inst);
  check_q(q, inst.feature_dim());
  return apply_bellman(g_representation(inst), inst.alpha * inst.psi,
                       inst.phi_av_mu, q);
}

Eigen::VectorXd vecinf(const QFunction& q, std::span<const State> av_states,
                       std::span<const double> action_grid, const RffMap& map) {
  if (action_grid.empty()) throw InvalidInput("vecinf: empty action grid");
  Eigen::VectorXd out(static_cast<Eigen::Index>(av_states.size()));
  for (std::size_t i = 0; i < av_states.size(); ++i) {
    double m = q(map, {av_states[i], action_grid[0]});
    for (std::size_t j = 1; j < action_grid.size(); ++j) {
      m = std::min(m, q(map, {av_states[i], action_grid[j]}));
    }
    out(static_cast<Eigen::Index>(i)) = m;
  }
  return out;
}

QFunction apply_bellman_greedy(const BellmanInstance& inst, const QFunction& q,
                               std::span<const double> action_grid,
                               const RffMap& map) {
  check_instance(inst);
  check_q(q, inst.feature_dim());
  if (static_cast<Eigen::Index>(inst.av_states.size()) != inst.size()) {
    throw InvalidInput("apply_bellman_greedy: instance carries no av_states");
  }
  const Eigen::VectorXd inf = vecinf(q, inst.av_states, action_grid, map);
  return {g_representation(inst) + inst.alpha * (inst.psi * inf)};
}

Eigen::VectorXd normal_vector_h(const BellmanInstance& inst,
                                const Point& z_star, const RffMap& map) {
  check_instance(inst);
  const Eigen::VectorXd phi_star = featurize(map, z_star);
  if (phi_star.size() != inst.feature_dim()) {
    throw InvalidInput("normal_vector_h: map does not match instance");
  }
  return hyperplane_normal(inst.psi, inst.phi_av_mu, inst.alpha, phi_star);
}

Eigen::VectorXd hyperplane_normal(const Eigen::MatrixXd& psi,
                                  const Eigen::MatrixXd& phi_av_mu, double alpha,
                                  const Eigen::VectorXd& phi_star) {
  if (psi.rows() != phi_star.size() || phi_av_mu.rows() != phi_star.size() ||
      psi.cols() != phi_av_mu.cols()) {
    throw InvalidInput("hyperplane_normal: dimension mismatch");
  }
  const Eigen::VectorXd coeff = psi.transpose() * phi_star;  // psi_i(z*)
  return phi_star - alpha * (phi_av_mu * coeff);
}

double hyperplane_loss(const QFunction& q, const Eigen::VectorXd& h,
                       double g_at_star) {
  check_q(q, h.size());
  const double r = q.weights.dot(h) - g_at_star;
  return 0.5 * r * r;
}

QFunction sgd_step(const QFunction& q, const Eigen::VectorXd& h,
                   double g_at_star, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("sgd_step: eta must be positive");
  check_q(q, h.size());
  const double r = q.weights.dot(h) - g_at_star;
  if (r == 0.0 || h.squaredNorm() == 0.0) return q;
  return {q.weights - (eta * r) * h};
}

double lipschitz_beta(const BellmanInstance& inst,
                      std::span<const double> action_grid,
                      std::span<const State> av_states, const RffMap& map,
                      BetaMode mode, double budget) {
  check_instance(inst);
  if (action_grid.empty()) throw InvalidInput("lipschitz_beta: empty action grid");
  if (inst.alpha == 0.0) return 0.0;
  const double k_psi = linalg::spectral_norm_psd(inst.psi.transpose() * inst.psi);
  const auto n_av = static_cast<Eigen::Index>(av_states.size());
  const auto n_act = static_cast<Eigen::Index>(action_grid.size());
  if (n_av == 0) return 0.0;

  // feats[i * n_act + j] = phi(s_i, a_j)
  std::vector<Eigen::VectorXd> feats;
  feats.reserve(static_cast<std::size_t>(n_av * n_act));
  for (Eigen::Index i = 0; i < n_av; ++i) {
    for (Eigen::Index j = 0; j < n_act; ++j) {
      feats.push_back(featurize(map, {av_states[static_cast<std::size_t>(i)],
                                      action_grid[static_cast<std::size_t>(j)]}));
    }
  }

  if (mode == BetaMode::upper_bound) {
    double diag = 0.0;
    for (const auto& f : feats) diag = std::max(diag, f.squaredNorm());
    return inst.alpha * std::sqrt(k_psi * static_cast<double>(n_av) * diag);
  }

  const double count = std::pow(static_cast<double>(n_act), static_cast<double>(n_av));
  if (count > budget) {
    std::ostringstream os;
    os << "lipschitz_beta: " << count << " action assignments exceed budget "
       << budget << "; use BetaMode::upper_bound";
    throw BudgetExceeded(os.str());
  }
  std::vector<Eigen::Index> digits(static_cast<std::size_t>(n_av), 0);
  Eigen::MatrixXd phi_av(feats.front().size(), n_av);
  double sup = 0.0;
  while (true) {
    for (Eigen::Index i = 0; i < n_av; ++i) {
      phi_av.col(i) = feats[static_cast<std::size_t>(i * n_act + digits[static_cast<std::size_t>(i)])];
    }
    sup = std::max(sup, linalg::spectral_norm_psd(phi_av.transpose() * phi_av));
    Eigen::Index pos = 0;
    while (pos < n_av && ++digits[static_cast<std::size_t>(pos)] == n_act) {
      digits[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == n_av) break;
  }
  return inst.alpha * std::sqrt(k_psi * sup);
}

}  // namespace rkhs_rl
