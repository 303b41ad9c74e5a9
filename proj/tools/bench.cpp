// bench: scenario runner and acceptance verifier.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rkhs_rl/bench.hpp"
#include "rkhs_rl/errors.hpp"
#include "rkhs_rl/verify/acceptance.hpp"

namespace {

using rkhs_rl::bench::RunConfig;

struct RunArgs {
  std::string config;
  std::optional<int> scenario;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> trials;
  std::optional<int> jobs;
};

// Command-line values are appended to the file as ordinary key lines, so a
// --preset or --scenario on the command line also picks the defaults.
RunConfig resolve(const RunArgs& a) {
  std::ostringstream text;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw std::runtime_error("cannot open config file " + a.config);
    text << in.rdbuf() << '\n';
  }
  if (a.preset) text << "preset = " << *a.preset << '\n';
  if (a.scenario) text << "scenario = " << *a.scenario << '\n';
  if (a.seed) text << "seed = " << *a.seed << '\n';
  if (a.out) text << "out_dir = " << *a.out << '\n';
  if (a.trials) text << "n_trials = " << *a.trials << '\n';
  if (a.jobs) text << "jobs = " << *a.jobs << '\n';
  std::istringstream in(text.str());
  return rkhs_rl::bench::parse_config(in, RunConfig::desk(1));
}

int do_run(const RunArgs& a) {
  const RunConfig cfg = resolve(a);
  cfg.validate();
  std::printf("scenario %d, %s preset: L=%d, %ld iterations, %d trials, %d job(s)\n", cfg.scenario,
              cfg.preset == rkhs_rl::bench::Preset::paper ? "paper" : "desk", cfg.L, cfg.n_iters,
              cfg.n_trials, cfg.jobs);
  const auto table = rkhs_rl::bench::run_scenario(cfg);
  const auto paths = rkhs_rl::bench::emit_outputs(table, cfg);
  const long from = std::max(0L, cfg.n_iters - 1000);
  std::printf("%-14s %22s\n", "method", "final-1000 NMSD (dB)");
  for (const auto& c : table.curves) {
    std::printf("%-14s %22.2f\n", c.method.c_str(),
                rkhs_rl::bench::window_mean(c, from, cfg.n_iters));
  }
  if (!table.aborts.empty()) std::printf("%zu aborted trial(s), see manifest\n", table.aborts.size());
  std::printf("wrote %s\n      %s\n", paths.csv.string().c_str(), paths.manifest.string().c_str());
  if (!paths.plot.empty()) std::printf("      %s\n", paths.plot.string().c_str());
  return 0;
}

int do_verify(std::uint64_t seed, int jobs, const std::vector<int>& only) {
  rkhs_rl::verify::AcceptanceOptions opt;
  opt.seed = seed;
  opt.jobs = jobs;
  bool ok = true;
  for (int id : only) {
    if (id < 1 || id > 9) throw rkhs_rl::InvalidInput("--only: criteria are numbered 1-9");
  }
  for (const auto& r : rkhs_rl::verify::run_acceptance(opt, only)) {
    std::cout << rkhs_rl::verify::format(r) << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel policy-iteration LMP benchmark"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Run a scenario and write CSV, manifest and plot data");
  run->add_option("--config", ra.config, "key = value config file")->check(CLI::ExistingFile);
  run->add_option("--scenario", ra.scenario, "1: system change, 2: noise switch")
      ->check(CLI::IsMember({1, 2}));
  run->add_option("--preset", ra.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--seed", ra.seed, "run seed");
  run->add_option("--out", ra.out, "output directory");
  run->add_option("--trials", ra.trials, "number of trials")->check(CLI::PositiveNumber);
  run->add_option("--jobs", ra.jobs, "worker threads")->check(CLI::PositiveNumber);

  std::uint64_t vseed = 1;
  int vjobs = 1;
  std::vector<int> only;
  auto* ver = app.add_subcommand("verify", "Run the acceptance checks; nonzero exit on failure");
  ver->add_option("--seed", vseed, "seed for every check");
  ver->add_option("--jobs", vjobs, "worker threads for the scenario checks")
      ->check(CLI::PositiveNumber);
  ver->add_option("--only", only, "criterion numbers to run")->delimiter(',');

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return do_run(ra);
    return do_verify(vseed, vjobs, only);
  } catch (const rkhs_rl::bench::RunFailed& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
