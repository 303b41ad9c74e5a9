#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rkhs_rl/agent.hpp"
#include "rkhs_rl/environment.hpp"

namespace rkhs_rl::bench {

enum class Preset { desk, paper };

/// Every parameter of a benchmark run. Field names double as config keys.
struct RunConfig {
  int scenario = 1;  // 1: system redraw, 2: noise-model switch
  Preset preset = Preset::desk;

  // Environment.
  int L = 20;
  long n_iters = 10000;
  int n_trials = 20;
  long change_at = 4000;  // system redraw (scenario 1) or noise switch (scenario 2)
  std::string scenario1_noise = "alpha_stable";       // alpha_stable | sparse
  std::string scenario2_order = "stable_to_sparse";   // or sparse_to_stable
  env::AlphaStable stable{};
  env::SparseOutliers sparse{};

  // Filter and state features.
  double rho = 1e-3;
  int M_av = 300;
  double varpi = 0.3;

  // Agent.
  std::vector<double> agent_alphas{0.9};
  double eta = 0.1;
  double sigma = 0.1;
  double delta_S = 0.01;
  double delta_Z = 0.02;
  long N_p = 500;
  int D_RFF = 200;
  double bandwidth = 2.5;
  std::vector<double> action_grid{1.0, 1.25, 1.5, 1.75, 2.0};
  long buffer_cap = 5000;
  bool replay = true;

  // Baselines and harness.
  std::vector<std::string> methods{"agent", "fixed_p", "random_p", "mixed_norm"};
  double mixed_p1 = 1.0;
  double mixed_p2 = 2.0;
  double mixed_weight = 0.5;
  std::uint64_t seed = 1;
  int jobs = 1;
  long plot_every = 10;  // 0 disables plot-data output
  std::string out_dir = "results";

  static RunConfig desk(int scenario = 1);
  static RunConfig paper(int scenario = 1);

  void validate() const;
  env::StreamSpec stream_spec() const;
  env::FilterParams filter_params() const;
  agent::AgentConfig agent_config(double alpha) const;
};

/// Applies `key = value` lines (blank lines and `#` comments ignored) on top
/// of `base`. Unknown keys and malformed values throw InvalidInput naming
/// the line.
RunConfig parse_config(std::istream& in, RunConfig base);
RunConfig load_config(const std::filesystem::path& path, RunConfig base);

/// Names of every RunConfig field, in manifest order.
const std::vector<std::string>& config_keys();

/// Deterministic 64-bit seed for (run seed, trial, stream id).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream);

/// Thin wrapper over env::nmsd_db.
double nmsd(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star);

/// Per-iteration output of one method on one stream.
struct TrialCurve {
  std::vector<double> nmsd_db;
  std::vector<double> p;
};

/// LMP with exponent p for every iteration.
TrialCurve baseline_fixed_p(const env::DataStream& stream,
                            const env::FilterParams& filter, double p);

/// LMP with p drawn uniformly from the grid at every iteration.
TrialCurve baseline_random_p(const env::DataStream& stream,
                             const env::FilterParams& filter,
                             std::span<const double> action_grid,
                             std::mt19937_64& rng);

/// theta + rho (w p1 |e|^{p1-1} + (1 - w) p2 |e|^{p2-1}) sign(e) x.
/// The recorded p is the mixed exponent w p1 + (1 - w) p2.
TrialCurve baseline_mixed_norm(const env::DataStream& stream,
                               const env::FilterParams& filter, double p1,
                               double p2, double weight);

struct AbortRecord {
  std::string method;
  int trial = 0;
  long iteration = 0;
  std::string message;
};

/// Trial-averaged curve of one method: nmsd_db is the uniform mean of the
/// per-trial dB values, nmsd_min/max their per-trial extremes.
struct MethodCurve {
  std::string method;
  std::vector<double> nmsd_db;
  std::vector<double> mean_p;
  std::vector<double> nmsd_min;
  std::vector<double> nmsd_max;
  int trials_used = 0;
};

struct ResultTable {
  long n_iters = 0;
  std::vector<MethodCurve> curves;
  std::vector<std::uint64_t> stream_checksums;  // one per trial
  std::vector<AbortRecord> aborts;
  long skipped_steps = 0;

  const MethodCurve& curve(const std::string& method) const;
};

/// Labels of the methods a config expands to, in output order.
std::vector<std::string> method_labels(const RunConfig& cfg);

/// Runs every method on every trial's stream. Throws RunFailed when 5% or
/// more of some method's trials abort.
ResultTable run_scenario(const RunConfig& cfg);

class RunFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean of curve.nmsd_db over iterations [begin, end).
double window_mean(const MethodCurve& curve, long begin, long end);

// Output ----------------------------------------------------------------------

/// `iter,method,nmsd_db,mean_p` rows, method-major. `every` keeps iterations
/// divisible by it.
void write_csv(std::ostream& out, const ResultTable& table, long every = 1);

/// Inverse of write_csv for the columns it carries.
ResultTable parse_csv(std::istream& in);

/// Run manifest: every config field, derived seeds, stream checksums,
/// aborts and the build's git-describe string.
std::string manifest_json(const RunConfig& cfg, const ResultTable& table);

struct OutputPaths {
  std::filesystem::path csv;
  std::filesystem::path manifest;
  std::filesystem::path plot;  // empty when plot_every == 0
};

/// Writes <out_dir>/scenario<k>.csv, the manifest and the plot-data file.
/// I/O failures throw std::runtime_error naming the path.
OutputPaths emit_outputs(const ResultTable& table, const RunConfig& cfg);

std::string git_describe();

}  // namespace rkhs_rl::bench
