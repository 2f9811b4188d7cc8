#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scn/autodiff.hpp"
#include "scn/network.hpp"

namespace scn {

enum class TripletNorm { paper_2M, plain_mean };
enum class TripletSign { standard, as_written };

struct TripletConfig {
  double margin = 0.2;
  TripletNorm normalization = TripletNorm::paper_2M;
  TripletSign sign = TripletSign::standard;

  void validate() const;
};

class BatchCompositionError : public Error {
 public:
  using Error::Error;
};

struct TripletResult {
  Var loss;  // one value
  double nonzero_fraction = 0.0;
  std::size_t triplets = 0;
  std::size_t active = 0;
};

// Batch-all triplet loss over every (anchor, positive, negative) in the
// batch, d = Euclidean distance of the flattened features.
//   standard:   hinge = max(M + d_ap - d_an, 0)
//   as_written: hinge = max(M - d_ap + d_an, 0)
//   paper_2M:   loss = sum(hinge) / (2M * triplets)
//   plain_mean: loss = sum(hinge) / active triplets (0 when none)
// At d = 0 the distance gradient is taken as 0.
TripletResult triplet_loss_ba(std::span<const Var> features, std::span<const int> labels,
                              const TripletConfig& cfg);

// Piecewise-constant learning rate: `initial` until the first breakpoint,
// then each breakpoint's rate from its step on.
struct LrSchedule {
  double initial = 1e-3;
  std::vector<std::pair<std::uint64_t, double>> breakpoints;

  double at(std::uint64_t step) const;
  // "casia_b", "ou_mvlp" or "constant".
  static LrSchedule preset(const std::string& name);
  // "1e-3" or "1e-3,10000:1e-4,80000:1e-5".
  static LrSchedule parse(const std::string& text);
  std::string str() const;
};

double lr_schedule(std::uint64_t step, const std::string& dataset);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m, v;
};

// One Adam update using each parameter's accumulated grad(). Moments are
// created on first use; a non-finite gradient throws before anything moves.
void optimizer_step(std::vector<NamedParam>& params, AdamState& state, double lr);

}  // namespace scn
