#include "rkhs_rl/agent.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <sstream>

#include "rkhs_rl/errors.hpp"

namespace rkhs_rl::agent {

void AgentConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidInput("AgentConfig: alpha must lie in [0, 1)");
  if (!(eta > 0.0)) throw InvalidInput("AgentConfig: eta must be positive");
  if (!(sigma >= 0.0)) throw InvalidInput("AgentConfig: sigma must be >= 0");
  if (!(delta_S > 0.0)) throw InvalidInput("AgentConfig: delta_S must be positive");
  if (!(delta_Z >= 0.0)) throw InvalidInput("AgentConfig: delta_Z must be >= 0");
  if (improvement_period < 1) throw InvalidInput("AgentConfig: improvement_period must be >= 1");
  if (!(bandwidth > 0.0)) throw InvalidInput("AgentConfig: bandwidth must be positive");
  if (action_grid.empty()) throw InvalidInput("AgentConfig: empty action grid");
  for (std::size_t i = 0; i < action_grid.size(); ++i) {
    const double a = action_grid[i];
    if (!(a >= 1.0 && a <= 2.0)) throw InvalidInput("AgentConfig: grid values must lie in [1, 2]");
    if (i > 0 && !(a > action_grid[i - 1])) {
      throw InvalidInput("AgentConfig: action grid must be strictly increasing");
    }
  }
}

void Buffer::push(BufferEntry e) {
  slots_.push_back({std::move(e), {}, {}});
  if (cap_ > 0) {
    while (slots_.size() > cap_) slots_.pop_front();
  }
}

void Buffer::bind(const RffMap& map) const {
  if (map_ == &map) return;
  for (auto& s : slots_) {
    s.phi.resize(0);
    s.phi_next.resize(0, 0);
  }
  grid_.clear();
  map_ = &map;
}

const Eigen::VectorXd& Buffer::point_features(std::size_t i, const RffMap& map) const {
  bind(map);
  const Slot& s = slots_.at(i);
  if (s.phi.size() == 0) s.phi = featurize(map, s.entry.point());
  return s.phi;
}

const Eigen::MatrixXd& Buffer::successor_features(std::size_t i, const RffMap& map,
                                                  std::span<const double> grid) const {
  bind(map);
  if (!std::equal(grid.begin(), grid.end(), grid_.begin(), grid_.end())) {
    for (auto& s : slots_) s.phi_next.resize(0, 0);
    grid_.assign(grid.begin(), grid.end());
  }
  const Slot& s = slots_.at(i);
  if (s.phi_next.size() == 0) {
    s.phi_next.resize(map.feature_dim(), static_cast<Eigen::Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
      s.phi_next.col(static_cast<Eigen::Index>(j)) = featurize(map, {s.entry.s_bar_next, grid[j]});
    }
  }
  return s.phi_next;
}

double policy_improve(const QFunction& q, const State& s,
                      std::span<const double> action_grid, const RffMap& map) {
  return greedy_action(q, s, action_grid, map);
}

namespace {

// 1 - exp(-d^2 / (2 w^2)) <= delta  <=>  d^2 <= -2 w^2 log(1 - delta), which
// spares an exponential per buffer entry.
double squared_radius(double delta, double bandwidth) {
  if (delta >= 1.0) return std::numeric_limits<double>::infinity();
  return -2.0 * bandwidth * bandwidth * std::log1p(-delta);
}

bool is_novel(const Buffer& buffer, const State& s, double delta_S, double bandwidth) {
  const double r2 = squared_radius(delta_S, bandwidth);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if ((s - buffer[i].s_bar).squaredNorm() <= r2) return false;
  }
  return true;
}

bool same_point(const BufferEntry& b, const Point& z) {
  return b.a_bar == z.action && b.s_bar == z.state;
}

void push_unique(TrajectorySet& out, const Transition& t) {
  if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
}

bool same_triple(const BufferEntry& a, const BufferEntry& b) {
  return a.a_bar == b.a_bar && a.s_bar == b.s_bar && a.s_bar_next == b.s_bar_next;
}

bool same_triple(const BufferEntry& a, const Transition& t) {
  return a.a_bar == t.action && a.s_bar == t.state && a.s_bar_next == t.next_state;
}

// Both replay paths draw through here so they consume the rng identically.
std::optional<std::size_t> pick_replay_anchor(const Buffer& buffer, const Point& exclude,
                                              std::mt19937_64& rng) {
  std::vector<std::size_t> eligible;
  eligible.reserve(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (!same_point(buffer[i], exclude)) eligible.push_back(i);
  }
  if (eligible.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

}  // namespace

bool buffer_update(Buffer& buffer, const BufferEntry& realized,
                   std::span<const BufferEntry> counterfactuals, double delta_S,
                   double bandwidth) {
  if (!is_novel(buffer, realized.s_bar, delta_S, bandwidth)) return false;
  buffer.push(realized);
  for (const auto& c : counterfactuals) buffer.push(c);
  return true;
}

std::vector<std::size_t> select_members(const Buffer& buffer, const Point& z,
                                        double delta_Z, double bandwidth) {
  std::vector<std::size_t> out;
  const double r2 = squared_radius(delta_Z, bandwidth);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const BufferEntry& b = buffer[i];
    const double da = z.action - b.a_bar;
    if ((z.state - b.s_bar).squaredNorm() + da * da > r2) continue;
    const bool dup = std::any_of(out.begin(), out.end(),
                                 [&](std::size_t j) { return same_triple(buffer[j], b); });
    if (!dup) out.push_back(i);
  }
  return out;
}

TrajectorySet select_trajectories(const Buffer& buffer, const Point& z,
                                  double delta_Z, double bandwidth,
                                  const std::optional<Transition>& current) {
  TrajectorySet out;
  for (std::size_t i : select_members(buffer, z, delta_Z, bandwidth)) {
    out.push_back(buffer[i].transition());
  }
  if (current) push_unique(out, *current);
  if (out.empty()) throw InvalidState("select_trajectories: no trajectory sample selected");
  return out;
}

QFunction policy_evaluation_step(const QFunction& q, const TrajectorySet& traj,
                                 const Point& z_anchor, double g_anchor,
                                 const AgentConfig& cfg, const RffMap& map,
                                 const Policy& policy) {
  if (traj.empty()) throw InvalidInput("policy_evaluation_step: empty trajectory set");
  Eigen::VectorXd h;
  if (cfg.alpha == 0.0) {
    h = featurize(map, z_anchor);
  } else {
    const BellmanInstance inst = make_instance(traj, map, cfg.sigma, cfg.alpha, policy);
    h = normal_vector_h(inst, z_anchor, map);
  }
  QFunction next = sgd_step(q, h, g_anchor, cfg.eta);
  assert(!(cfg.eta * h.squaredNorm() < 2.0) ||
         hyperplane_loss(next, h, g_anchor) <= hyperplane_loss(q, h, g_anchor) * (1.0 + 1e-12) + 1e-300);
  return next;
}

QFunction policy_evaluation_step(const QFunction& q, const Buffer& buffer,
                                 std::span<const std::size_t> members,
                                 const std::optional<Transition>& extra,
                                 const Point& z_anchor, double g_anchor,
                                 const AgentConfig& cfg, const RffMap& map,
                                 const QFunction& frozen) {
  const bool use_extra =
      extra && std::none_of(members.begin(), members.end(),
                            [&](std::size_t i) { return same_triple(buffer[i], *extra); });
  const auto n = static_cast<Eigen::Index>(members.size() + (use_extra ? 1 : 0));
  if (n == 0) throw InvalidInput("policy_evaluation_step: empty trajectory set");

  Eigen::VectorXd h;
  if (cfg.alpha == 0.0) {
    h = featurize(map, z_anchor);
  } else {
    const Eigen::Index d = map.feature_dim();
    Eigen::MatrixXd phi_traj(d, n);
    Eigen::MatrixXd phi_av(d, n);
    // First minimum over the increasing grid, as greedy_action picks.
    auto greedy_col = [&](const Eigen::MatrixXd& cand) {
      Eigen::Index best = 0;
      double best_q = frozen.weights.dot(cand.col(0));
      for (Eigen::Index j = 1; j < cand.cols(); ++j) {
        const double v = frozen.weights.dot(cand.col(j));
        if (v < best_q) {
          best_q = v;
          best = j;
        }
      }
      return best;
    };
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      phi_traj.col(c) = buffer.point_features(members[k], map);
      const Eigen::MatrixXd& cand = buffer.successor_features(members[k], map, cfg.action_grid);
      phi_av.col(c) = cand.col(greedy_col(cand));
    }
    if (use_extra) {
      phi_traj.col(n - 1) = featurize(map, extra->point());
      const double a = greedy_action(frozen, extra->next_state, cfg.action_grid, map);
      phi_av.col(n - 1) = featurize(map, {extra->next_state, a});
    }
    const Eigen::MatrixXd psi = build_psi(phi_traj, cfg.sigma);
    h = hyperplane_normal(psi, phi_av, cfg.alpha, featurize(map, z_anchor));
  }
  return sgd_step(q, h, g_anchor, cfg.eta);
}

QFunction replay_step(const QFunction& q, const Buffer& buffer,
                      const Point& exclude, const AgentConfig& cfg,
                      std::mt19937_64& rng, const RffMap& map,
                      const Policy& policy) {
  const auto idx = pick_replay_anchor(buffer, exclude, rng);
  if (!idx) return q;
  const BufferEntry& anchor = buffer[*idx];
  const TrajectorySet traj =
      select_trajectories(buffer, anchor.point(), cfg.delta_Z, cfg.bandwidth, std::nullopt);
  return policy_evaluation_step(q, traj, anchor.point(), anchor.g_bar, cfg, map, policy);
}

QFunction replay_step(const QFunction& q, const Buffer& buffer,
                      const Point& exclude, const AgentConfig& cfg,
                      std::mt19937_64& rng, const RffMap& map,
                      const QFunction& frozen) {
  const auto idx = pick_replay_anchor(buffer, exclude, rng);
  if (!idx) return q;
  const BufferEntry& anchor = buffer[*idx];
  const auto members = select_members(buffer, anchor.point(), cfg.delta_Z, cfg.bandwidth);
  // The anchor is always within delta_Z of itself, so members is non-empty.
  return policy_evaluation_step(q, buffer, members, std::nullopt, anchor.point(),
                                anchor.g_bar, cfg, map, frozen);
}

EpisodeResult run_episode(const env::DataStream& stream,
                          const env::FilterParams& filter,
                          const AgentConfig& cfg, const RffMap& map,
                          std::uint64_t seed, const ThetaObserver& observer) {
  cfg.validate();
  if (stream.size() < 1) throw InvalidInput("run_episode: empty stream");
  if (std::abs(map.bandwidth() - cfg.bandwidth) > 0.0) {
    throw InvalidInput("run_episode: RFF bandwidth differs from the kernel bandwidth");
  }
  const auto filter_len = static_cast<int>(stream.x.rows());
  std::mt19937_64 rng(seed);

  env::FilterState fs = env::FilterState::initial(filter_len);
  Buffer buffer(cfg.buffer_cap);
  QFunction q = QFunction::zero(map.feature_dim());
  QFunction frozen = q;

  EpisodeResult out;
  out.records.reserve(static_cast<std::size_t>(stream.size()));
  State s_prev = State::Zero();
  double a_prev = cfg.action_grid.front();
  std::vector<BufferEntry> counterfactuals;
  counterfactuals.reserve(cfg.action_grid.size());

  for (long n = 0; n < stream.size(); ++n) {
    const Eigen::VectorXd x = stream.x.col(n);
    const double y = stream.y(n);

    // No transition has happened yet at n = 0, so the first state is zero.
    State s_now = State::Zero();
    double g_now = 0.0;
    if (n > 0) {
      s_now = env::compute_successor_state(fs, filter, x, y);
      g_now = env::one_step_loss_from_state(s_now);
      counterfactuals.clear();
      if (is_novel(buffer, s_prev, cfg.delta_S, cfg.bandwidth)) {
        const env::Sample& last = fs.history.back();
        for (double a : cfg.action_grid) {
          const Eigen::VectorXd cand =
              env::lmp_step(fs.theta_prev, last.x, last.y, a, filter.rho).theta;
          const State s_alt = env::successor_state(cand, fs.theta_prev, fs.history,
                                                   x, y, fs.s4_prev, filter);
          counterfactuals.push_back({s_prev, a, env::one_step_loss_from_state(s_alt), s_alt});
        }
      }
    }
    fs.s4_prev = s_now(3);

    if (n % cfg.improvement_period == 0) {
      frozen = q;
    }
    const double a_now = greedy_action(frozen, s_now, cfg.action_grid, map);

    try {
      env::lmp_update(fs, filter, x, y, a_now);
    } catch (const RunAborted& e) {
      throw RunAborted(e.what(), n);
    }
    if (!fs.theta.allFinite()) {
      std::ostringstream os;
      os << "run_episode: filter diverged at iteration " << n;
      throw RunAborted(os.str(), n);
    }

    if (n > 0) {
      const BufferEntry realized{s_prev, a_prev, g_now, s_now};
      buffer_update(buffer, realized, counterfactuals, cfg.delta_S, cfg.bandwidth);
      const Point z_prev{s_prev, a_prev};
      try {
        const auto members = select_members(buffer, z_prev, cfg.delta_Z, cfg.bandwidth);
        q = policy_evaluation_step(q, buffer, members, realized.transition(), z_prev,
                                   g_now, cfg, map, frozen);
      } catch (const SingularSystem&) {
        ++out.skipped_steps;
      }
      if (cfg.replay) {
        try {
          q = replay_step(q, buffer, z_prev, cfg, rng, map, frozen);
        } catch (const SingularSystem&) {
          ++out.skipped_steps;
        }
      }
      if (!q.weights.allFinite()) {
        std::ostringstream os;
        os << "run_episode: Q-function diverged at iteration " << n;
        throw RunAborted(os.str(), n);
      }
    }

    out.records.push_back({n, a_now, env::nmsd_db(fs.theta, stream.theta_star(n)), s_now, g_now});
    if (observer) observer(n, fs.theta);
    s_prev = s_now;
    a_prev = a_now;
  }
  out.final_theta = fs.theta;
  return out;
}

}  // namespace rkhs_rl::agent
