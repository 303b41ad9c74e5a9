#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/environment.hpp"
#include "rkhs_rl/features.hpp"
#include "rkhs_rl/qfunc.hpp"

namespace rkhs_rl::agent {

/// Stored experience (s, a, g(s, a), s').
struct BufferEntry {
  State s_bar = State::Zero();
  double a_bar = 1.0;
  double g_bar = 0.0;
  State s_bar_next = State::Zero();

  Point point() const { return {s_bar, a_bar}; }
  Transition transition() const { return {s_bar, a_bar, s_bar_next}; }
};

struct AgentConfig {
  double alpha = 0.9;
  double eta = 0.1;
  double sigma = 0.1;
  double delta_S = 0.01;
  double delta_Z = 0.02;
  long improvement_period = 500;
  std::vector<double> action_grid{1.0, 1.25, 1.5, 1.75, 2.0};
  std::size_t buffer_cap = 5000;  // 0 keeps every entry
  bool replay = true;
  double bandwidth = 2.5;  // of the Gaussian kernel behind both distances

  void validate() const;
};

/// Experience buffer with oldest-first eviction.
///
/// Entries lazily cache their RFF features for one map. The caches are
/// mutable, so a Buffer must not be shared across threads.
class Buffer {
 public:
  explicit Buffer(std::size_t cap = 5000) : cap_(cap) {}

  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  std::size_t cap() const { return cap_; }
  const BufferEntry& operator[](std::size_t i) const { return slots_[i].entry; }

  void push(BufferEntry e);

  /// phi(s_bar_i, a_bar_i).
  const Eigen::VectorXd& point_features(std::size_t i, const RffMap& map) const;

  /// Column j is phi(s_bar'_i, grid[j]).
  const Eigen::MatrixXd& successor_features(std::size_t i, const RffMap& map,
                                            std::span<const double> grid) const;

 private:
  struct Slot {
    BufferEntry entry;
    mutable Eigen::VectorXd phi;
    mutable Eigen::MatrixXd phi_next;
  };
  void bind(const RffMap& map) const;

  std::size_t cap_;
  std::deque<Slot> slots_;
  mutable const RffMap* map_ = nullptr;
  mutable std::vector<double> grid_;  // grid behind the phi_next caches
};

/// Greedy action of `q` at `s`; ties go to the smallest action.
double policy_improve(const QFunction& q, const State& s,
                      std::span<const double> action_grid, const RffMap& map);

/// Inserts `realized` and every counterfactual when s_prev is farther than
/// delta_S (in 1 - kernel distance) from every stored state. Returns whether
/// the insertion happened.
bool buffer_update(Buffer& buffer, const BufferEntry& realized,
                   std::span<const BufferEntry> counterfactuals, double delta_S,
                   double bandwidth);

/// Indices of the entries within delta_Z of `z`, keeping the first of any
/// exact duplicate triples.
std::vector<std::size_t> select_members(const Buffer& buffer, const Point& z,
                                        double delta_Z, double bandwidth);

/// Buffer entries within delta_Z of `z`, plus `current` when given. Exact
/// duplicate triples are kept once. Throws InvalidState when the result is
/// empty.
TrajectorySet select_trajectories(const Buffer& buffer, const Point& z,
                                  double delta_Z, double bandwidth,
                                  const std::optional<Transition>& current);

/// One SGD step on the hyperplane loss anchored at `z_anchor`.
QFunction policy_evaluation_step(const QFunction& q, const TrajectorySet& traj,
                                 const Point& z_anchor, double g_anchor,
                                 const AgentConfig& cfg, const RffMap& map,
                                 const Policy& policy);

/// The same step over buffer members (plus `extra` unless it duplicates a
/// member), using the buffer's feature caches and the greedy policy of
/// `frozen`. Agrees with the TrajectorySet overload under
/// greedy_policy(frozen).
QFunction policy_evaluation_step(const QFunction& q, const Buffer& buffer,
                                 std::span<const std::size_t> members,
                                 const std::optional<Transition>& extra,
                                 const Point& z_anchor, double g_anchor,
                                 const AgentConfig& cfg, const RffMap& map,
                                 const QFunction& frozen);

/// Experience replay: anchors one SGD step at a buffer entry drawn uniformly
/// among those whose state-action pair differs from `exclude`. Returns q
/// unchanged when no entry is eligible.
QFunction replay_step(const QFunction& q, const Buffer& buffer,
                      const Point& exclude, const AgentConfig& cfg,
                      std::mt19937_64& rng, const RffMap& map,
                      const Policy& policy);

/// Cached counterpart of replay_step; draws the same anchor for the same rng.
QFunction replay_step(const QFunction& q, const Buffer& buffer,
                      const Point& exclude, const AgentConfig& cfg,
                      std::mt19937_64& rng, const RffMap& map,
                      const QFunction& frozen);

/// Per-iteration output of an episode.
struct StepRecord {
  long n = 0;
  double p = 0.0;
  double nmsd_db = 0.0;
  State state = State::Zero();
  double g = 0.0;
};

struct EpisodeResult {
  std::vector<StepRecord> records;
  Eigen::VectorXd final_theta;
  long skipped_steps = 0;  // SGD steps dropped on an ill-conditioned system
};

/// Optional hook receiving theta_{n+1} after every filter update.
using ThetaObserver = std::function<void(long, const Eigen::VectorXd&)>;

/// Runs the online policy-iteration loop over a pre-generated stream.
/// Throws RunAborted (carrying the iteration) when the filter diverges.
EpisodeResult run_episode(const env::DataStream& stream,
                          const env::FilterParams& filter,
                          const AgentConfig& cfg, const RffMap& map,
                          std::uint64_t seed,
                          const ThetaObserver& observer = {});

}  // namespace rkhs_rl::agent
