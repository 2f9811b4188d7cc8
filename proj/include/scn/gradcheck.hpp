#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "scn/autodiff.hpp"

namespace scn {

/// Maps recorded inputs to a one-element output on the given tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

// Compares reverse-mode gradients against central differences of step h,
// error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). When
// max_coords > 0, at most that many coordinates per input are probed
// (chosen deterministically from seed); otherwise all are.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double h,
                           double tol, std::size_t max_coords = 0, std::uint64_t seed = 0);

// Single-input form; non-scalar outputs are contracted with fixed
// pseudo-random weights so every output coordinate contributes.
double grad_check(const std::function<Var(Var)>& fn, const Tensor& input, double h, double tol);

// Same comparison for parameter tensors read through Tape::param inside fn.
// Parameters are perturbed in place and restored.
GradCheckResult grad_check_params(const std::function<Var(Tape&)>& fn,
                                  const std::vector<Tensor*>& params, double h, double tol,
                                  std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace scn
