#include "scn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scn {
namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var out = fn(tape, vars);
  if (out.value().size() != 1)
    throw DimensionError("grad_check: function must return one value, got " +
                         shape_str(out.shape()));
  return out.value()[0];
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t max_coords,
                                     std::mt19937_64& rng) {
  std::vector<std::size_t> coords(size);
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && coords.size() > max_coords) {
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
    std::sort(coords.begin(), coords.end());
  }
  return coords;
}

void tally(GradCheckResult& res, double a, double numeric, std::size_t in, std::size_t c) {
  const double err = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
  ++res.coords_checked;
  if (err > res.max_rel_error) {
    res.max_rel_error = err;
    res.worst_input = in;
    res.worst_coord = c;
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double h,
                           double tol, std::size_t max_coords, std::uint64_t seed) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  const Var out = fn(tape, vars);
  out.value().check_finite("grad_check forward");
  tape.backward(out);

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  std::vector<Tensor> probe = inputs;
  for (std::size_t in = 0; in < inputs.size(); ++in) {
    const auto analytic = tape.grad(vars[in]);
    for (std::size_t c : pick_coords(inputs[in].size(), max_coords, rng)) {
      const double orig = inputs[in][c];
      probe[in][c] = orig + h;
      const double up = evaluate(fn, probe);
      probe[in][c] = orig - h;
      const double down = evaluate(fn, probe);
      probe[in][c] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: non-finite value perturbing input " + std::to_string(in) +
                           " coordinate " + std::to_string(c));
      tally(res, analytic[c], (up - down) / (2.0 * h), in, c);
    }
  }
  res.passed = res.max_rel_error <= tol;
  return res;
}

GradCheckResult grad_check_params(const std::function<Var(Tape&)>& fn,
                                  const std::vector<Tensor*>& params, double h, double tol,
                                  std::size_t max_coords, std::uint64_t seed) {
  auto eval = [&]() {
    Tape tape;
    tape.set_track_params(false);
    const Var out = fn(tape);
    if (out.value().size() != 1)
      throw DimensionError("grad_check_params: function must return one value, got " +
                           shape_str(out.shape()));
    return out.value()[0];
  };
  std::vector<std::vector<double>> saved;
  for (Tensor* p : params) {
    saved.emplace_back(p->grad().begin(), p->grad().end());
    p->zero_grad();
  }
  {
    Tape tape;
    const Var out = fn(tape);
    out.value().check_finite("grad_check_params forward");
    tape.backward(out);
    tape.flush_param_grads();
  }
  std::vector<std::vector<double>> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic.emplace_back(params[i]->grad().begin(), params[i]->grad().end());
    std::copy(saved[i].begin(), saved[i].end(), params[i]->grad().begin());
  }

  GradCheckResult res;
  std::mt19937_64 rng(seed);
  for (std::size_t in = 0; in < params.size(); ++in) {
    Tensor& p = *params[in];
    for (std::size_t c : pick_coords(p.size(), max_coords, rng)) {
      const double orig = p[c];
      p[c] = orig + h;
      const double up = eval();
      p[c] = orig - h;
      const double down = eval();
      p[c] = orig;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check_params: non-finite value perturbing parameter " +
                           std::to_string(in) + " coordinate " + std::to_string(c));
      tally(res, analytic[in][c], (up - down) / (2.0 * h), in, c);
    }
  }
  res.passed = res.max_rel_error <= tol;
  return res;
}

double grad_check(const std::function<Var(Var)>& fn, const Tensor& input, double h, double tol) {
  // Contraction weights are drawn once from the output shape of a probe run.
  Tape probe_tape;
  const Tensor out_shape_probe = fn(probe_tape.constant(input)).value();
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Tensor weights(out_shape_probe.shape());
  for (auto& w : weights.values()) w = u(rng);
  const bool scalar_out = out_shape_probe.size() == 1;
  ScalarFn wrapped = [&](Tape&, std::span<const Var> v) {
    const Var y = fn(v[0]);
    return scalar_out ? y : weighted_sum(y, weights);
  };
  return grad_check(wrapped, {input}, h, tol).max_rel_error;
}

}  // namespace scn
