#pragma once

#include <string>
#include <vector>

#include "scn/gradcheck.hpp"

namespace scn {

struct OpCheck {
  std::string name;
  GradCheckResult result;
  double tolerance = 0.0;
  double seconds = 0.0;
};

struct GradCheckSuiteConfig {
  double op_tolerance = 1e-6;
  double e2e_tolerance = 1e-4;
  double step = 1e-5;       // central-difference step for single operations
  double e2e_step = 1e-6;   // and through the whole network
  std::size_t e2e_coords = 4;  // coordinates probed per parameter tensor
};

// Names of every check in the suite, in run order.
std::vector<std::string> gradcheck_names();

// Runs the checks whose name equals `only` (all when empty). Unknown names
// raise ConfigError; a non-finite difference raises NumericError.
std::vector<OpCheck> run_gradcheck_suite(const GradCheckSuiteConfig& cfg,
                                         const std::string& only = {});

}  // namespace scn
