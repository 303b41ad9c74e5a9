#include "rkhs_rl/bench.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rkhs_rl/errors.hpp"

#ifndef RKHS_RL_GIT_DESCRIBE
#define RKHS_RL_GIT_DESCRIBE "unknown"
#endif

namespace rkhs_rl::bench {

namespace {

constexpr std::uint64_t kStreamSeed = 0;
constexpr std::uint64_t kRffSeed = 1;
constexpr std::uint64_t kRandomPSeed = 2;
constexpr std::uint64_t kAgentSeedBase = 16;

std::string format_number(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

enum class Kind { agent, fixed_p, random_p, mixed_norm };

struct MethodPlan {
  std::string label;
  Kind kind;
  double param = 0.0;      // alpha for the agent, p for fixed-p
  std::size_t index = 0;   // agent variant index
};

std::vector<MethodPlan> plan_methods(const RunConfig& cfg) {
  std::vector<MethodPlan> plans;
  for (const auto& m : cfg.methods) {
    if (m == "agent") {
      for (std::size_t i = 0; i < cfg.agent_alphas.size(); ++i) {
        const double a = cfg.agent_alphas[i];
        plans.push_back({"agent_a" + format_number(a, "%g"), Kind::agent, a, i});
      }
    } else if (m == "fixed_p") {
      for (double p : cfg.action_grid) {
        plans.push_back({"lmp_p" + format_number(p, "%g"), Kind::fixed_p, p, 0});
      }
    } else if (m == "random_p") {
      plans.push_back({"random_p", Kind::random_p, 0.0, 0});
    } else if (m == "mixed_norm") {
      plans.push_back({"mixed_norm", Kind::mixed_norm, 0.0, 0});
    }
  }
  return plans;
}

// Shared driver of every filter-only baseline: `gain` returns the scalar
// multiplying x for prior error e, and `exponent` the p recorded at n.
template <class Exponent, class Gain>
TrialCurve run_filter(const env::DataStream& stream, Exponent exponent, Gain gain) {
  TrialCurve out;
  out.nmsd_db.reserve(static_cast<std::size_t>(stream.size()));
  out.p.reserve(static_cast<std::size_t>(stream.size()));
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(stream.x.rows());
  for (long n = 0; n < stream.size(); ++n) {
    const auto x = stream.x.col(n);
    const double e = stream.y(n) - theta.dot(x);
    if (!std::isfinite(e)) {
      std::ostringstream os;
      os << "baseline filter diverged at iteration " << n;
      throw RunAborted(os.str(), n);
    }
    const double p = exponent(n);
    theta += gain(p, e) * x;
    out.p.push_back(p);
    out.nmsd_db.push_back(env::nmsd_db(theta, stream.theta_star(n)));
  }
  return out;
}

// Same operation order as env::lmp_step, so fixed-p runs match it bitwise.
double lmp_gain(double rho, double p, double e) {
  if (e == 0.0) return 0.0;
  return rho * p * std::pow(std::abs(e), p - 1.0) * (e > 0.0 ? 1.0 : -1.0);
}

struct TrialOutput {
  std::vector<std::optional<TrialCurve>> curves;
  std::vector<AbortRecord> aborts;
  std::uint64_t checksum = 0;
  long skipped = 0;
};

TrialOutput run_trial(const RunConfig& cfg, const std::vector<MethodPlan>& plans,
                      const env::StreamSpec& spec, int trial) {
  const auto t = static_cast<std::uint64_t>(trial);
  const env::DataStream stream = env::generate_stream(spec, derive_seed(cfg.seed, t, kStreamSeed));
  const env::FilterParams filter = cfg.filter_params();
  std::optional<RffMap> map;

  TrialOutput out;
  out.checksum = stream.checksum();
  for (const auto& plan : plans) {
    try {
      switch (plan.kind) {
        case Kind::agent: {
          if (!map) map = sample_rff(derive_seed(cfg.seed, t, kRffSeed), cfg.D_RFF, cfg.bandwidth);
          const auto result = agent::run_episode(
              stream, filter, cfg.agent_config(plan.param), *map,
              derive_seed(cfg.seed, t, kAgentSeedBase + plan.index));
          TrialCurve c;
          c.nmsd_db.reserve(result.records.size());
          c.p.reserve(result.records.size());
          for (const auto& r : result.records) {
            c.nmsd_db.push_back(r.nmsd_db);
            c.p.push_back(r.p);
          }
          out.skipped += result.skipped_steps;
          out.curves.emplace_back(std::move(c));
          break;
        }
        case Kind::fixed_p:
          out.curves.emplace_back(baseline_fixed_p(stream, filter, plan.param));
          break;
        case Kind::random_p: {
          std::mt19937_64 rng(derive_seed(cfg.seed, t, kRandomPSeed));
          out.curves.emplace_back(baseline_random_p(stream, filter, cfg.action_grid, rng));
          break;
        }
        case Kind::mixed_norm:
          out.curves.emplace_back(baseline_mixed_norm(stream, filter, cfg.mixed_p1,
                                                      cfg.mixed_p2, cfg.mixed_weight));
          break;
      }
    } catch (const RunAborted& e) {
      out.curves.emplace_back(std::nullopt);
      out.aborts.push_back({plan.label, trial, e.iteration(), e.what()});
    }
  }
  return out;
}

struct Accumulator {
  std::vector<double> db_sum;
  std::vector<double> p_sum;
  std::vector<double> min_db;
  std::vector<double> max_db;
  int used = 0;

  explicit Accumulator(long n)
      : db_sum(static_cast<std::size_t>(n), 0.0),
        p_sum(static_cast<std::size_t>(n), 0.0),
        min_db(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity()),
        max_db(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity()) {}

  void add(const TrialCurve& c) {
    for (std::size_t i = 0; i < db_sum.size(); ++i) {
      db_sum[i] += c.nmsd_db[i];
      p_sum[i] += c.p[i];
      min_db[i] = std::min(min_db[i], c.nmsd_db[i]);
      max_db[i] = std::max(max_db[i], c.nmsd_db[i]);
    }
    ++used;
  }
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

double nmsd(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star) {
  return env::nmsd_db(theta, theta_star);
}

TrialCurve baseline_fixed_p(const env::DataStream& stream,
                            const env::FilterParams& filter, double p) {
  if (!(p >= 1.0 && p <= 2.0)) throw InvalidInput("baseline_fixed_p: p must lie in [1, 2]");
  const double rho = filter.rho;
  return run_filter(
      stream, [p](long) { return p; },
      [rho](double q, double e) { return lmp_gain(rho, q, e); });
}

TrialCurve baseline_random_p(const env::DataStream& stream,
                             const env::FilterParams& filter,
                             std::span<const double> action_grid,
                             std::mt19937_64& rng) {
  if (action_grid.empty()) throw InvalidInput("baseline_random_p: empty action grid");
  std::uniform_int_distribution<std::size_t> pick(0, action_grid.size() - 1);
  const double rho = filter.rho;
  return run_filter(
      stream, [&](long) { return action_grid[pick(rng)]; },
      [rho](double q, double e) { return lmp_gain(rho, q, e); });
}

TrialCurve baseline_mixed_norm(const env::DataStream& stream,
                               const env::FilterParams& filter, double p1,
                               double p2, double weight) {
  if (!(p1 >= 1.0 && p1 <= 2.0 && p2 >= 1.0 && p2 <= 2.0)) {
    throw InvalidInput("baseline_mixed_norm: exponents must lie in [1, 2]");
  }
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw InvalidInput("baseline_mixed_norm: weight must lie in [0, 1]");
  }
  const double mixed_p = weight * p1 + (1.0 - weight) * p2;
  const double rho = filter.rho;
  return run_filter(
      stream, [mixed_p](long) { return mixed_p; },
      [=](double, double e) {
        // Drop a zero-weight term so that its |e|^{p-1} never enters.
        double g = 0.0;
        if (weight > 0.0) g += weight * lmp_gain(rho, p1, e);
        if (weight < 1.0) g += (1.0 - weight) * lmp_gain(rho, p2, e);
        return g;
      });
}

const MethodCurve& ResultTable::curve(const std::string& method) const {
  const auto it = std::find_if(curves.begin(), curves.end(),
                               [&](const MethodCurve& c) { return c.method == method; });
  if (it == curves.end()) throw InvalidInput("ResultTable: no method named " + method);
  return *it;
}

std::vector<std::string> method_labels(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (const auto& p : plan_methods(cfg)) out.push_back(p.label);
  return out;
}

ResultTable run_scenario(const RunConfig& cfg) {
  cfg.validate();
  const auto plans = plan_methods(cfg);
  const env::StreamSpec spec = cfg.stream_spec();
  env::validate(spec);

  std::vector<Accumulator> acc(plans.size(), Accumulator(cfg.n_iters));
  ResultTable table;
  table.n_iters = cfg.n_iters;

  auto merge = [&](TrialOutput&& t) {
    table.stream_checksums.push_back(t.checksum);
    table.skipped_steps += t.skipped;
    for (std::size_t m = 0; m < plans.size(); ++m) {
      if (t.curves[m]) acc[m].add(*t.curves[m]);
    }
    for (auto& a : t.aborts) table.aborts.push_back(std::move(a));
  };

  const int jobs = std::min(cfg.jobs, cfg.n_trials);
  if (jobs <= 1) {
    for (int trial = 0; trial < cfg.n_trials; ++trial) merge(run_trial(cfg, plans, spec, trial));
  } else {
    // Trials finish out of order; they are merged strictly by index so the
    // floating-point sums do not depend on scheduling.
    struct Slot {
      std::optional<TrialOutput> value;
      std::exception_ptr error;
      bool done = false;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(cfg.n_trials));
    std::mutex mu;
    std::condition_variable cv;
    int next = 0;
    bool cancel = false;

    auto worker = [&] {
      for (;;) {
        int trial;
        {
          std::lock_guard lock(mu);
          if (next >= cfg.n_trials || cancel) return;
          trial = next++;
        }
        Slot s;
        try {
          s.value = run_trial(cfg, plans, spec, trial);
        } catch (...) {
          s.error = std::current_exception();
        }
        s.done = true;
        {
          std::lock_guard lock(mu);
          slots[static_cast<std::size_t>(trial)] = std::move(s);
        }
        cv.notify_all();
      }
    };
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);

    std::exception_ptr first_error;
    for (int trial = 0; trial < cfg.n_trials && !first_error; ++trial) {
      Slot s;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return slots[static_cast<std::size_t>(trial)].done; });
        s = std::move(slots[static_cast<std::size_t>(trial)]);
      }
      if (s.error) {
        first_error = s.error;
        std::lock_guard lock(mu);
        cancel = true;
      } else {
        merge(std::move(*s.value));
      }
    }
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
  }

  for (std::size_t m = 0; m < plans.size(); ++m) {
    const auto aborted = std::count_if(table.aborts.begin(), table.aborts.end(),
                                       [&](const AbortRecord& a) { return a.method == plans[m].label; });
    if (aborted * 20 >= cfg.n_trials && aborted > 0) {
      std::ostringstream os;
      os << "method " << plans[m].label << ": " << aborted << " of " << cfg.n_trials
         << " trials aborted";
      for (const auto& a : table.aborts) {
        if (a.method == plans[m].label) {
          os << "\n  trial " << a.trial << " at iteration " << a.iteration << ": " << a.message;
        }
      }
      throw RunFailed(os.str());
    }
    MethodCurve c;
    c.method = plans[m].label;
    c.trials_used = acc[m].used;
    const auto n = static_cast<std::size_t>(cfg.n_iters);
    c.nmsd_db.resize(n);
    c.mean_p.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c.nmsd_db[i] = acc[m].db_sum[i] / acc[m].used;
      c.mean_p[i] = acc[m].p_sum[i] / acc[m].used;
    }
    c.nmsd_min = std::move(acc[m].min_db);
    c.nmsd_max = std::move(acc[m].max_db);
    table.curves.push_back(std::move(c));
  }
  return table;
}

double window_mean(const MethodCurve& curve, long begin, long end) {
  const long n = static_cast<long>(curve.nmsd_db.size());
  if (begin < 0 || end > n || begin >= end) throw InvalidInput("window_mean: bad window");
  double s = 0.0;
  for (long i = begin; i < end; ++i) s += curve.nmsd_db[static_cast<std::size_t>(i)];
  return s / static_cast<double>(end - begin);
}

// Output ----------------------------------------------------------------------

void write_csv(std::ostream& out, const ResultTable& table, long every) {
  if (every < 1) throw InvalidInput("write_csv: every must be >= 1");
  out << "iter,method,nmsd_db,mean_p\n";
  for (const auto& c : table.curves) {
    for (std::size_t i = 0; i < c.nmsd_db.size(); i += static_cast<std::size_t>(every)) {
      out << i << ',' << c.method << ',' << format_number(c.nmsd_db[i], "%.17g") << ','
          << format_number(c.mean_p[i], "%.17g") << '\n';
    }
  }
}

ResultTable parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "iter,method,nmsd_db,mean_p") {
    throw InvalidInput("parse_csv: missing or unexpected header");
  }
  ResultTable table;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string iter, method, nmsd_s, p_s;
    if (!std::getline(ss, iter, ',') || !std::getline(ss, method, ',') ||
        !std::getline(ss, nmsd_s, ',') || !std::getline(ss, p_s)) {
      throw InvalidInput("parse_csv: malformed row " + std::to_string(number));
    }
    if (table.curves.empty() || table.curves.back().method != method) {
      table.curves.push_back({});
      table.curves.back().method = method;
    }
    auto number_of = [&](const std::string& field) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (field.empty() || end != field.c_str() + field.size()) {
        throw InvalidInput("parse_csv: bad number '" + field + "' in row " + std::to_string(number));
      }
      return v;
    };
    auto& c = table.curves.back();
    c.nmsd_db.push_back(number_of(nmsd_s));
    c.mean_p.push_back(number_of(p_s));
  }
  if (!table.curves.empty()) table.n_iters = static_cast<long>(table.curves.front().nmsd_db.size());
  return table;
}

namespace {

nlohmann::ordered_json noise_json(const env::NoiseModel& m) {
  return std::visit(
      [](const auto& v) -> nlohmann::ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, env::AlphaStable>) {
          return {{"kind", "alpha_stable"}, {"alpha", v.alpha}, {"beta", v.beta}, {"scale", v.scale}};
        } else {
          return {{"kind", "sparse"}, {"outlier_prob", v.prob}, {"lo", v.lo}, {"hi", v.hi},
                  {"snr_db", v.snr_db}};
        }
      },
      m);
}

nlohmann::ordered_json config_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["scenario"] = c.scenario;
  j["preset"] = c.preset == Preset::paper ? "paper" : "desk";
  j["L"] = c.L;
  j["n_iters"] = c.n_iters;
  j["n_trials"] = c.n_trials;
  j["change_at"] = c.change_at;
  j["scenario1_noise"] = c.scenario1_noise;
  j["scenario2_order"] = c.scenario2_order;
  j["stable_alpha"] = c.stable.alpha;
  j["stable_beta"] = c.stable.beta;
  j["stable_scale"] = c.stable.scale;
  j["sparse_prob"] = c.sparse.prob;
  j["sparse_lo"] = c.sparse.lo;
  j["sparse_hi"] = c.sparse.hi;
  j["sparse_snr_db"] = c.sparse.snr_db;
  j["rho"] = c.rho;
  j["M_av"] = c.M_av;
  j["varpi"] = c.varpi;
  j["agent_alphas"] = c.agent_alphas;
  j["eta"] = c.eta;
  j["sigma"] = c.sigma;
  j["delta_S"] = c.delta_S;
  j["delta_Z"] = c.delta_Z;
  j["N_p"] = c.N_p;
  j["D_RFF"] = c.D_RFF;
  j["bandwidth"] = c.bandwidth;
  j["action_grid"] = c.action_grid;
  j["buffer_cap"] = c.buffer_cap;
  j["replay"] = c.replay;
  j["methods"] = c.methods;
  j["mixed_p1"] = c.mixed_p1;
  j["mixed_p2"] = c.mixed_p2;
  j["mixed_weight"] = c.mixed_weight;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["plot_every"] = c.plot_every;
  j["out_dir"] = c.out_dir;
  return j;
}

}  // namespace

std::string manifest_json(const RunConfig& cfg, const ResultTable& table) {
  nlohmann::ordered_json j;
  j["git_describe"] = git_describe();
  j["config"] = config_json(cfg);

  const env::StreamSpec spec = cfg.stream_spec();
  auto schedule = nlohmann::ordered_json::array();
  for (const auto& seg : spec.noise) {
    schedule.push_back({{"begin", seg.begin}, {"model", noise_json(seg.model)}});
  }
  j["noise_schedule"] = schedule;
  j["system_change"] = spec.system_change;
  j["method_labels"] = method_labels(cfg);

  auto seeds = nlohmann::ordered_json::array();
  for (int t = 0; t < cfg.n_trials; ++t) {
    const auto tt = static_cast<std::uint64_t>(t);
    std::vector<std::uint64_t> agent_seeds;
    for (std::size_t i = 0; i < cfg.agent_alphas.size(); ++i) {
      agent_seeds.push_back(derive_seed(cfg.seed, tt, kAgentSeedBase + i));
    }
    seeds.push_back({{"trial", t},
                     {"stream", derive_seed(cfg.seed, tt, kStreamSeed)},
                     {"rff", derive_seed(cfg.seed, tt, kRffSeed)},
                     {"random_p", derive_seed(cfg.seed, tt, kRandomPSeed)},
                     {"agent", agent_seeds}});
  }
  j["trial_seeds"] = seeds;
  j["stream_checksums"] = table.stream_checksums;

  auto aborts = nlohmann::ordered_json::array();
  for (const auto& a : table.aborts) {
    aborts.push_back({{"method", a.method}, {"trial", a.trial}, {"iteration", a.iteration},
                      {"message", a.message}});
  }
  j["aborts"] = aborts;
  j["skipped_sgd_steps"] = table.skipped_steps;
  auto used = nlohmann::ordered_json::object();
  for (const auto& c : table.curves) used[c.method] = c.trials_used;
  j["trials_used"] = used;
  return j.dump(2) + "\n";
}

OutputPaths emit_outputs(const ResultTable& table, const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());

  const std::string stem = "scenario" + std::to_string(cfg.scenario);
  OutputPaths paths{dir / (stem + ".csv"), dir / (stem + "_manifest.json"), {}};
  if (cfg.plot_every > 0) paths.plot = dir / (stem + "_plot.csv");

  auto write = [](const std::filesystem::path& p, const auto& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + p.string());
  };
  write(paths.csv, [&](std::ostream& o) { write_csv(o, table); });
  write(paths.manifest, [&](std::ostream& o) { o << manifest_json(cfg, table); });
  if (!paths.plot.empty()) {
    write(paths.plot, [&](std::ostream& o) { write_csv(o, table, cfg.plot_every); });
  }
  return paths;
}

std::string git_describe() { return RKHS_RL_GIT_DESCRIBE; }

}  // namespace rkhs_rl::bench
