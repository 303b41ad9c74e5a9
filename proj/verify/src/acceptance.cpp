#include "rkhs_rl/verify/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "rkhs_rl/agent.hpp"
#include "rkhs_rl/bench.hpp"
#include "rkhs_rl/environment.hpp"
#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/linalg.hpp"
#include "rkhs_rl/qfunc.hpp"
#include "rkhs_rl/variational.hpp"
#include "rkhs_rl/verify/oracles.hpp"

namespace rkhs_rl::verify {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// `limit` is a wall-clock budget in seconds; exceeding it fails the check.
CheckResult timed(int id, std::string name, const std::function<void(CheckResult&)>& body,
                  double limit = std::numeric_limits<double>::infinity()) {
  CheckResult r{id, std::move(name), false, {}, 0.0};
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  if (r.seconds >= limit) {
    r.passed = false;
    r.detail += fmt("; over the %.0f s budget", limit);
  }
  return r;
}

constexpr double kAlphas[] = {0.0, 0.5, 0.9};
constexpr double kSigmas[] = {0.0, 0.1, 1.0};

// Cycles through every (alpha, sigma) pair within the first nine instances.
struct InstanceSpec {
  int n;
  int d;
  double alpha;
  double sigma;
};

InstanceSpec instance_spec(int k, int max_n) {
  return {1 + k % max_n, k % 2 == 0 ? 16 : 64, kAlphas[k % 3], kSigmas[(k / 3) % 3]};
}

double last_window(const bench::MethodCurve& c, long n_iters) {
  return bench::window_mean(c, n_iters - 1000, n_iters);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::string format(const CheckResult& r) {
  return fmt("[%s] %d %s: %s (%.2f s)", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
             r.detail.c_str(), r.seconds);
}

CheckResult check_closed_form_identities(const AcceptanceOptions& opt) {
  return timed(1, "closed_form_identities", [&](CheckResult& r) {
    double lspe = 0.0;
    double br = 0.0;
    double br_raw = 0.0;
    double iii = 0.0;
    int br_count = 0;
    std::mt19937_64 rng(opt.seed);
    for (int k = 0; k < 20; ++k) {
      const InstanceSpec s = instance_spec(k, 6);
      const RandomInstance ri = random_instance(opt.seed * 1000 + static_cast<std::uint64_t>(k),
                                                s.n, s.d, s.alpha, s.sigma);
      const QFunction q = random_q(rng, s.d);
      lspe = std::max(lspe, relative_error(variational::t_lspe_via_prop1(ri.var, q).weights,
                                           variational::t_lspe(ri.var, q).weights));
      iii = std::max(iii, relative_error(variational::prop1iii_map(ri.var, q).weights,
                                         apply_bellman_mu(ri.inst, q).weights));
      if (s.sigma > 0.0) {
        // The closed form lives in span(Phi_TD); the direct minimiser also
        // carries the part of Q orthogonal to it.
        const variational::BrResult b = variational::t_br(ri.var, q);
        br = std::max(br, relative_error(b.reconstruction.weights + b.complement.weights,
                                         b.direct.weights));
        br_raw = std::max(br_raw, relative_error(b.reconstruction.weights, b.direct.weights));
        ++br_count;
      }
    }
    const double tol = 1e-8;
    r.passed = lspe <= tol && br <= tol && iii <= tol;
    r.detail = fmt("20 instances; lspe %.2e, br %.2e over %d (closed form alone %.2e), "
                   "ridge-map %.2e; tol %.0e",
                   lspe, br, br_count, br_raw, iii, tol);
  }, 10.0);
}

CheckResult check_lstd_fixed_point(const AcceptanceOptions& opt) {
  return timed(2, "lstd_fixed_point", [&](CheckResult& r) {
    int checked = 0;
    int skipped = 0;
    double membership = 0.0;
    double lspe_residual = 0.0;
    for (int k = 0; k < 30; ++k) {
      const InstanceSpec s = instance_spec(k, 6);
      const RandomInstance ri = random_instance(opt.seed * 2000 + static_cast<std::uint64_t>(k),
                                                s.n, s.d, s.alpha, s.sigma);
      const auto& v = ri.var;
      const Eigen::MatrixXd k_mat = v.phi_traj.transpose() * v.phi_traj;
      const Eigen::MatrixXd a = k_mat - v.alpha * (v.phi_next_mu.transpose() * v.phi_traj);
      if (linalg::condition_general(a) >= 1e8) {
        ++skipped;
        continue;
      }
      const QFunction q = variational::lstd_fixed_point(v);
      const double rhs = (v.phi_traj * v.g).norm();
      membership = std::max(membership, variational::lstd_residual(v, q).norm() / (1.0 + rhs));
      lspe_residual = std::max(lspe_residual, (variational::t_lspe(v, q).weights - q.weights).norm() /
                                                  (1.0 + q.weights.norm()));
      ++checked;
    }
    r.passed = checked > 0 && membership <= 1e-8 && lspe_residual <= 1e-8;
    r.detail = fmt("%d instances checked, %d skipped (cond >= 1e8); membership %.2e, "
                   "t_lspe residual %.2e; tol 1e-08",
                   checked, skipped, membership, lspe_residual);
  });
}

CheckResult check_lipschitz(const AcceptanceOptions& opt) {
  return timed(3, "lipschitz_contraction", [&](CheckResult& r) {
    const std::vector<double> grid{1.0, 1.5, 2.0};
    double worst_slack = -std::numeric_limits<double>::infinity();
    double worst_ratio = 0.0;
    int contractive = 0;
    int picard_ok = 0;
    std::string picard_fail;
    std::mt19937_64 rng(opt.seed + 3);
    for (int k = 0; k < 16; ++k) {
      const int n = 1 + k % 4;
      const int d = (k / 4) % 2 == 0 ? 16 : 64;
      const double alpha = k % 2 == 0 ? 0.5 : 0.9;
      const double sigma = (k / 8) % 2 == 0 ? 1.0 : 0.1;
      const RandomInstance ri =
          random_instance(opt.seed * 3000 + static_cast<std::uint64_t>(k), n, d, alpha, sigma, grid);
      std::vector<State> av;
      for (const auto& t : ri.traj) av.push_back(t.next_state);
      const double beta = lipschitz_beta(ri.inst, grid, av, ri.map, BetaMode::exact);
      for (int i = 0; i < 50; ++i) {
        const QFunction q1 = random_q(rng, d, 3.0);
        const QFunction q2 = random_q(rng, d, 3.0);
        const double lhs =
            (apply_bellman_mu(ri.inst, q1).weights - apply_bellman_mu(ri.inst, q2).weights).norm();
        const double rhs = beta * (q1.weights - q2.weights).norm();
        worst_slack = std::max(worst_slack, lhs - rhs);
        if (rhs > 0.0) worst_ratio = std::max(worst_ratio, lhs / rhs);
      }
      if (beta < 1.0) {
        ++contractive;
        QFunction q = random_q(rng, d, 3.0);
        QFunction next = apply_bellman_mu(ri.inst, q);
        const double d0 = (next.weights - q.weights).norm();
        const long budget =
            (d0 <= 1e-6 || beta == 0.0)
                ? 1
                : std::max(0L, static_cast<long>(std::ceil(std::log(1e-6 / d0) / std::log(beta)))) + 1;
        bool ok = false;
        for (long it = 0; it <= budget; ++it) {
          if ((next.weights - q.weights).norm() <= 1e-6) {
            ok = true;
            break;
          }
          q = next;
          next = apply_bellman_mu(ri.inst, q);
        }
        if (ok) {
          ++picard_ok;
        } else {
          picard_fail += fmt(" #%d(beta %.3f)", k, beta);
        }
      }
    }
    r.passed = worst_slack <= 1e-10 && contractive > 0 && picard_ok == contractive;
    r.detail = fmt("16 instances x 50 pairs; max |T(Q1)-T(Q2)| / (beta |Q1-Q2|) = %.3f, "
                   "max slack %.2e; Picard within bound %d/%d",
                   worst_ratio, worst_slack, picard_ok, contractive) +
               picard_fail;
  });
}

CheckResult check_rff_fidelity(const AcceptanceOptions& opt) {
  return timed(4, "rff_fidelity", [&](CheckResult& r) {
    const std::vector<double> grid{1.0, 1.25, 1.5, 1.75, 2.0};
    std::mt19937_64 rng(opt.seed + 4);
    std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
    std::vector<std::pair<Point, Point>> pairs;
    for (int i = 0; i < 1000; ++i) {
      const Point a{random_state(rng, 0.5), grid[pick(rng)]};
      const Point b{random_state(rng, 0.5), grid[pick(rng)]};
      pairs.emplace_back(a, b);
    }
    std::vector<double> means;
    double frac_at_max = 0.0;
    for (int d : {100, 1000, 10000}) {
      const RffMap map = sample_rff(opt.seed * 10 + static_cast<std::uint64_t>(d), d, 1.0);
      double sum = 0.0;
      int within = 0;
      for (const auto& [a, b] : pairs) {
        const double err =
            std::abs(featurize(map, a).dot(featurize(map, b)) - gaussian_kernel(a, b, 1.0));
        sum += err;
        if (err <= 0.05) ++within;
      }
      means.push_back(sum / static_cast<double>(pairs.size()));
      frac_at_max = within / static_cast<double>(pairs.size());
    }
    const bool monotone = means[0] > means[1] && means[1] > means[2];
    r.passed = frac_at_max >= 0.99 && monotone;
    r.detail = fmt("D=1e4 within 0.05: %.1f%%; mean |err| %.4f > %.4f > %.4f", 100.0 * frac_at_max,
                   means[0], means[1], means[2]);
  });
}

CheckResult check_degenerate_agent(const AcceptanceOptions& opt) {
  return timed(5, "degenerate_agent", [&](CheckResult& r) {
    bench::RunConfig cfg = bench::RunConfig::desk(1);
    cfg.n_iters = 5000;
    cfg.change_at = 2000;
    const env::DataStream stream = env::generate_stream(cfg.stream_spec(), opt.seed);
    const RffMap map = sample_rff(opt.seed + 5, cfg.D_RFF, cfg.bandwidth);
    std::string detail;
    bool ok = true;
    for (double p : {2.0, 1.0}) {
      agent::AgentConfig ac = cfg.agent_config(0.9);
      ac.action_grid = {p};
      const Eigen::MatrixXd oracle = lmp_oracle(stream.x, stream.y, p, cfg.rho);
      double worst = 0.0;
      agent::run_episode(stream, cfg.filter_params(), ac, map, opt.seed,
                         [&](long n, const Eigen::VectorXd& theta) {
                           const Eigen::VectorXd ref = oracle.col(n);
                           worst = std::max(worst, (theta - ref).cwiseAbs().maxCoeff() /
                                                       std::max(1.0, ref.cwiseAbs().maxCoeff()));
                         });
      ok = ok && worst <= 1e-12;
      detail += fmt("%sgrid {%g} vs %s max dev %.2e", detail.empty() ? "" : "; ", p,
                    p == 2.0 ? "LMS" : "sign-LMS", worst);
    }
    r.passed = ok;
    r.detail = detail + " over 5000 iterations; tol 1e-12";
  });
}

CheckResult check_noise_oracles(const AcceptanceOptions& opt) {
  return timed(6, "noise_oracles", [&](CheckResult& r) {
    env::Rng rng(opt.seed + 6);
    constexpr int kN = 1000000;
    const double scale = 1.5;

    // Gaussian limit: variance 2 scale^2.
    double m = 0.0;
    double m2 = 0.0;
    for (int i = 0; i < kN; ++i) {
      const double v = env::gen_alpha_stable(rng, 2.0, 0.0, scale);
      m += v;
      m2 += v * v;
    }
    m /= kN;
    const double var2 = m2 / kN - m * m;
    const double var_err = std::abs(var2 / (2.0 * scale * scale) - 1.0);

    // Cauchy median.
    std::vector<double> c(kN);
    for (auto& v : c) v = env::gen_alpha_stable(rng, 1.0, 0.0, scale);
    std::nth_element(c.begin(), c.begin() + kN / 2, c.end());
    const double median = c[kN / 2];

    // Scale family, independent samples.
    std::vector<double> s2(100000);
    std::vector<double> s1(100000);
    env::Rng rng_a(opt.seed + 61);
    env::Rng rng_b(opt.seed + 62);
    for (auto& v : s2) v = env::gen_alpha_stable(rng_a, 1.5, 0.0, 2.0);
    for (auto& v : s1) v = 2.0 * env::gen_alpha_stable(rng_b, 1.5, 0.0, 1.0);
    const KsResult ks = ks_two_sample(s2, s1);

    const bool stable_ok = var_err <= 0.03 && std::abs(median) <= 0.01 * scale && ks.p_value > 0.01;

    // Sparse outliers.
    const double power = 1.0;
    const double snr = 30.0;
    const double target = power / std::pow(10.0, snr / 10.0);
    double g2 = 0.0;
    for (int i = 0; i < kN; ++i) {
      const double v = env::gen_sparse_noise(rng, 0.0, -100.0, 100.0, snr, power);
      g2 += v * v;
    }
    const double gauss_err = std::abs(g2 / kN / target - 1.0);
    double um = 0.0;
    double um2 = 0.0;
    for (int i = 0; i < kN; ++i) {
      const double v = env::gen_sparse_noise(rng, 1.0, -100.0, 100.0, snr, power);
      um += v;
      um2 += v * v;
    }
    um /= kN;
    const double uvar_err = std::abs((um2 / kN - um * um) / (100.0 * 100.0 / 3.0) - 1.0);
    const double six_sigma = 6.0 * std::sqrt(target);
    long big = 0;
    for (int i = 0; i < kN; ++i) {
      if (std::abs(env::gen_sparse_noise(rng, 0.1, -100.0, 100.0, snr, power)) > six_sigma) ++big;
    }
    const double rate = static_cast<double>(big) / kN;
    // Standard error of the uniform mean is 100 / sqrt(3 N), about 0.058.
    const bool sparse_ok = gauss_err <= 0.03 && std::abs(um) <= 0.3 && uvar_err <= 0.03 &&
                           std::abs(rate - 0.1) <= 0.01;

    r.passed = stable_ok && sparse_ok;
    r.detail = fmt("stable: var err %.2f%%, median %.4f, KS D=%.4f p=%.3f; sparse: gauss var err "
                   "%.2f%%, uniform mean %.3f var err %.2f%%, outlier rate %.4f",
                   100.0 * var_err, median, ks.statistic, ks.p_value, 100.0 * gauss_err, um,
                   100.0 * uvar_err, rate);
  });
}

CheckResult check_scenario1(const AcceptanceOptions& opt) {
  return timed(7, "scenario1_desk", [&](CheckResult& r) {
    bench::RunConfig cfg = bench::RunConfig::desk(1);
    cfg.seed = opt.seed;
    cfg.jobs = opt.jobs;
    const bench::ResultTable t = bench::run_scenario(cfg);
    const std::string agent_label = bench::method_labels(cfg).front();
    const double agent = last_window(t.curve(agent_label), cfg.n_iters);
    const double random_p = last_window(t.curve("random_p"), cfg.n_iters);
    double best = std::numeric_limits<double>::infinity();
    std::string best_label;
    for (const auto& c : t.curves) {
      if (c.method.rfind("lmp_p", 0) != 0) continue;
      const double v = last_window(c, cfg.n_iters);
      if (v < best) {
        best = v;
        best_label = c.method;
      }
    }
    const bool a = agent <= random_p - 2.0;
    const bool b = agent <= best + 3.0;
    r.passed = a && b;
    r.detail = fmt("final-1000 mean: %s %.2f dB, random_p %.2f dB (a %s), best fixed %s %.2f dB "
                   "(b %s)",
                   agent_label.c_str(), agent, random_p, a ? "ok" : "FAIL", best_label.c_str(), best,
                   b ? "ok" : "FAIL");
  }, 300.0);
}

CheckResult check_scenario2(const AcceptanceOptions& opt) {
  return timed(8, "scenario2_desk", [&](CheckResult& r) {
    bench::RunConfig cfg = bench::RunConfig::desk(2);
    cfg.seed = opt.seed;
    cfg.jobs = opt.jobs;
    const bench::ResultTable t = bench::run_scenario(cfg);
    bool finite = true;
    for (const auto& c : t.curves) {
      for (long n = cfg.change_at; n < cfg.n_iters; ++n) {
        if (!std::isfinite(c.nmsd_db[static_cast<std::size_t>(n)])) finite = false;
      }
    }
    const std::string agent_label = bench::method_labels(cfg).front();
    const double agent = last_window(t.curve(agent_label), cfg.n_iters);
    const double random_p = last_window(t.curve("random_p"), cfg.n_iters);
    r.passed = finite && t.aborts.empty() && agent <= random_p - 2.0;
    r.detail = fmt("switch at %ld; curves finite post-switch: %s, aborts %zu; final-1000 mean %s "
                   "%.2f dB vs random_p %.2f dB",
                   cfg.change_at, finite ? "yes" : "no", t.aborts.size(), agent_label.c_str(), agent,
                   random_p);
  });
}

CheckResult check_reproducibility(const AcceptanceOptions& opt) {
  return timed(9, "reproducibility", [&](CheckResult& r) {
    const std::filesystem::path root =
        opt.scratch_dir.empty()
            ? std::filesystem::temp_directory_path() / fmt("rkhs_rl_repro_%llu",
                                                           static_cast<unsigned long long>(opt.seed))
            : opt.scratch_dir;
    std::filesystem::remove_all(root);
    bench::RunConfig cfg = bench::RunConfig::desk(1);
    cfg.seed = opt.seed;
    cfg.n_iters = 1500;
    cfg.change_at = 600;
    cfg.n_trials = 3;
    cfg.jobs = std::max(2, opt.jobs);
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
      cfg.out_dir = (root / fmt("run%d", run)).string();
      const bench::OutputPaths paths = bench::emit_outputs(bench::run_scenario(cfg), cfg);
      csv[run] = read_file(paths.csv);
    }
    std::filesystem::remove_all(root);
    r.passed = !csv[0].empty() && csv[0] == csv[1];
    r.detail = fmt("two runs of a 3-trial, 1500-iteration config: CSV %zu bytes, %s", csv[0].size(),
                   r.passed ? "byte-identical" : "DIFFER");
  });
}

std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opt, const std::vector<int>& ids) {
  using Check = CheckResult (*)(const AcceptanceOptions&);
  static constexpr Check kChecks[] = {
      check_closed_form_identities, check_lstd_fixed_point, check_lipschitz,
      check_rff_fidelity,     check_degenerate_agent, check_noise_oracles,
      check_scenario1,        check_scenario2,        check_reproducibility,
  };
  std::vector<CheckResult> out;
  for (int id = 1; id <= 9; ++id) {
    if (!ids.empty() && std::find(ids.begin(), ids.end(), id) == ids.end()) continue;
    out.push_back(kChecks[id - 1](opt));
  }
  return out;
}

}  // namespace rkhs_rl::verify
