#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/features.hpp"

namespace rkhs_rl::env {

using Rng = std::mt19937_64;

/// Floor applied inside every logarithm of the state features.
inline constexpr double kLogFloor = 1e-30;

/// Stable law S(alpha, beta, scale) in the S1 parameterisation.
struct AlphaStable {
  double alpha = 1.0;
  double beta = 0.5;
  double scale = 1.0;
};

/// Uniform outliers on [lo, hi] with probability `prob`; Gaussian background
/// noise at `snr_db` relative to the clean-signal power otherwise.
struct SparseOutliers {
  double prob = 0.1;
  double lo = -100.0;
  double hi = 100.0;
  double snr_db = 30.0;
};

using NoiseModel = std::variant<AlphaStable, SparseOutliers>;

void validate(const NoiseModel& model);

/// One Chambers-Mallows-Stuck draw.
double gen_alpha_stable(Rng& rng, double alpha, double beta, double scale);

double gen_sparse_noise(Rng& rng, double outlier_prob, double lo, double hi,
                        double snr_db, double signal_power);

double draw_noise(Rng& rng, const NoiseModel& model, double signal_power);

// LMP filter ----------------------------------------------------------------

struct Sample {
  Eigen::VectorXd x;
  double y = 0.0;
};

struct FilterParams {
  double rho = 1e-3;
  int m_av = 300;
  double varpi = 0.3;
};

struct LmpStep {
  Eigen::VectorXd theta;
  double error = 0.0;  // prior error y - theta^T x
};

/// theta + rho p |e|^{p-1} sign(e) x with e = y - theta^T x and sign(0) = 0.
/// Throws RunAborted when e is not finite.
LmpStep lmp_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                 double y, double p, double rho);

/// Filter bookkeeping at time n, before (x_n, y_n) is consumed.
struct FilterState {
  Eigen::VectorXd theta;       // theta_n
  Eigen::VectorXd theta_prev;  // theta_{n-1}
  std::deque<Sample> history;  // up to m_av pairs strictly before n
  double s4_prev = 0.0;        // displacement feature of the current state

  // Last step, kept for the expanded form of the displacement feature.
  double p_prev = 1.0;
  double e_prev = 0.0;
  double x_prev_norm = 0.0;

  static FilterState initial(int filter_len);
};

/// Applies the LMP step with exponent p, appends (x, y) to the history and
/// returns the prior error.
double lmp_update(FilterState& fs, const FilterParams& params,
                  const Eigen::VectorXd& x, double y, double p);

/// Successor-state features given theta_n(a) (`candidate`) and theta_{n-1}.
///   s1 = log10 max(e_n^2, floor), e_n = y_n - candidate^T x_n
///   s2 = mean over history of log10(max(r^2, floor) / ||x||^2)
///   s3 = log10 ||x_n||
///   s4 = varpi s4_prev + (1 - varpi) log10 max(||candidate - theta_prev|| / rho, floor)
/// Throws InvalidState on an empty history.
State successor_state(const Eigen::VectorXd& candidate,
                      const Eigen::VectorXd& theta_prev,
                      const std::deque<Sample>& history,
                      const Eigen::VectorXd& x_n, double y_n, double s4_prev,
                      const FilterParams& params);

/// successor_state with candidate = fs.theta and theta_prev = fs.theta_prev.
State compute_successor_state(const FilterState& fs, const FilterParams& params,
                              const Eigen::VectorXd& x_n, double y_n);

/// Expanded displacement feature, valid when the displacement is a pure LMP
/// step: varpi s4 + (1 - varpi)((p - 1) log10|e| + log10||x|| + log10 p).
double displacement_feature_expanded(double s4_prev, double varpi, double p,
                                     double e, double x_norm);

/// The one-step loss of a transition is the windowed posterior-error feature
/// of its successor state.
inline double one_step_loss_from_state(const State& successor) {
  return successor(1);
}

/// 10 log10(||theta - theta_star||^2 / ||theta_star||^2), floored at -300 dB.
/// Throws InvalidInput for a zero theta_star.
double nmsd_db(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star);

// Data streams --------------------------------------------------------------

struct NoiseSegment {
  long begin = 0;  // first iteration using `model`
  NoiseModel model;
};

struct StreamSpec {
  int filter_len = 20;
  long n_iters = 10000;
  std::vector<NoiseSegment> noise;  // sorted by begin, first begins at 0
  long system_change = -1;          // iteration of the system redraw, or -1
};

/// Pre-generated system-identification stream, shared by every method of a
/// trial so that their curves are paired.
struct DataStream {
  Eigen::MatrixXd x;  // L x n_iters
  Eigen::VectorXd y;
  Eigen::VectorXd noise;
  std::vector<Eigen::VectorXd> systems;
  std::vector<long> system_begin;

  long size() const { return static_cast<long>(y.size()); }
  const Eigen::VectorXd& theta_star(long n) const;
  std::uint64_t checksum() const;
};

void validate(const StreamSpec& spec);

DataStream generate_stream(const StreamSpec& spec, std::uint64_t seed);

}  // namespace rkhs_rl::env
