#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rkhs_rl::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// One-line rendering: `[PASS] 3 lipschitz: ... (0.4 s)`.
std::string format(const CheckResult& r);

struct AcceptanceOptions {
  std::uint64_t seed = 1;
  int jobs = 1;
  std::filesystem::path scratch_dir;  // empty: a fresh directory under temp
};

CheckResult check_closed_form_identities(const AcceptanceOptions& opt);
CheckResult check_lstd_fixed_point(const AcceptanceOptions& opt);
CheckResult check_lipschitz(const AcceptanceOptions& opt);
CheckResult check_rff_fidelity(const AcceptanceOptions& opt);
CheckResult check_degenerate_agent(const AcceptanceOptions& opt);
CheckResult check_noise_oracles(const AcceptanceOptions& opt);
CheckResult check_scenario1(const AcceptanceOptions& opt);
CheckResult check_scenario2(const AcceptanceOptions& opt);
CheckResult check_reproducibility(const AcceptanceOptions& opt);

/// Criteria by id (1-9); an empty list runs all of them in order.
std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opt,
                                        const std::vector<int>& ids = {});

}  // namespace rkhs_rl::verify
