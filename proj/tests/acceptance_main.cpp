#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "rkhs_rl/verify/acceptance.hpp"

int main(int argc, char** argv) {
  rkhs_rl::verify::AcceptanceOptions opt;
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::stoi(argv[i]));
  const auto results = rkhs_rl::verify::run_acceptance(opt, ids);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << rkhs_rl::verify::format(r) << std::endl;
    ok = ok && r.passed;
  }
  return ok ? EXIT_SUCCESS : EXIT_FAILURE;
}
