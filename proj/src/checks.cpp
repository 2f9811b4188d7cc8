#include "scn/checks.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "scn/loss.hpp"
#include "scn/network.hpp"

namespace scn {
namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Magnitudes in [0.2, 1] with random signs, so abs and leaky ReLU are probed
// away from their kinks.
Tensor kink_free(Shape shape, std::uint64_t seed) {
  Tensor t = uniform(std::move(shape), seed, 0.2, 1.0);
  std::mt19937_64 rng(seed ^ 0xabc);
  for (auto& v : t.values())
    if (rng() & 1) v = -v;
  return t;
}

// Frames offset by 3 per step: no |a - b| in a template crosses zero under
// the difference step.
Tensor spread_frames(Shape shape, std::uint64_t seed) {
  Tensor t = kink_free(shape, seed);
  const std::size_t fs = t.size() / shape[0];
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += 3.0 * static_cast<double>(i / fs);
  return t;
}

Var contract(Var y) {
  return weighted_sum(y, uniform(y.shape(), 99, 0.5, 1.5));
}

struct Entry {
  std::string name;
  bool end_to_end;
  std::function<GradCheckResult(const GradCheckSuiteConfig&)> run;
};

GradCheckResult op(const GradCheckSuiteConfig& c, const ScalarFn& fn, std::vector<Tensor> in) {
  return grad_check(fn, in, c.step, c.op_tolerance, 0, 1);
}

GradCheckResult fusion_check(const GradCheckSuiteConfig& c, FusionMode mode) {
  std::mt19937_64 rng(13);
  const Tensor x = spread_frames({4, 2, 3, 3}, 14);
  ConvBlockParams cb = init_conv_block(2, rng);
  FusionParams p = init_fusion(mode, 2, rng);
  std::vector<Tensor*> params;
  if (mode == FusionMode::adaptive) {
    // Leave the zero-initialised point so every weight carries gradient.
    p.template_block->conv2 = init_conv(2, 2, 3, rng);
    for (auto* cp : {&cb.conv1, &cb.conv2, &p.template_block->conv1, &p.template_block->conv2}) {
      // Positive biases keep most pre-activations on the unit-slope side,
      // away from the kink and from the 0.01-scaled gradients whose finite
      // differences drown in round-off.
      for (auto& b : cp->bias.values()) b = 4.0;
      params.push_back(&cp->kernel);
      params.push_back(&cp->bias);
    }
  } else {
    p.w = Tensor::scalar(0.4);
    params.push_back(&*p.w);
    if (p.mix) {
      params.push_back(&p.mix->kernel);
      params.push_back(&p.mix->bias);
    }
  }
  auto fn = [&](Tape& tape) {
    FeatureSequence f(tape.constant(x));
    const MotionTemplate t = template_diff(f);
    switch (mode) {
      case FusionMode::micro: return contract(fuse_micro(f, t, p).frames());
      case FusionMode::global: return contract(fuse_global(f, t, p).frames());
      case FusionMode::adaptive: break;
    }
    return contract(fuse_adaptive(f, t, p, cb).frames());
  };
  return grad_check_params(fn, params, c.step, c.op_tolerance);
}

GradCheckResult end_to_end(const GradCheckSuiteConfig& c) {
  ModelConfig m;
  m.channels = {4, 8, 16};
  m.height = 16;
  m.width = 12;
  m.bie_template = TemplateChoice::diff;
  m.bie_fusion = FusionMode::adaptive;
  m.mfa_window = 3;
  ScnParams p = init_params(m, 14);
  std::mt19937_64 rng(15);
  for (auto& st : p.stages)
    st.bie->template_block->conv2 =
        init_conv(st.cb.conv1.out_channels(), st.cb.conv1.out_channels(), 3, rng);
  // Two subjects with two sequences each: the smallest batch with both
  // positives and negatives.
  std::vector<Tensor> seqs;
  for (std::uint64_t s = 0; s < 4; ++s) seqs.push_back(uniform({8, 1, 16, 12}, 16 + s, 0.0, 1.0));
  const std::vector<int> labels{1, 1, 2, 2};
  TripletConfig tc;
  tc.margin = 10.0;  // every triplet active, so the loss is smooth at this point
  auto fn = [&](Tape& tape) {
    std::vector<Var> feats;
    for (const auto& x : seqs) feats.push_back(scn_forward(p, tape.constant(x)));
    return triplet_loss_ba(feats, labels, tc).loss;
  };
  std::vector<Tensor*> params;
  for (auto& [name, t] : p.named()) params.push_back(t);
  return grad_check_params(fn, params, c.e2e_step, c.e2e_tolerance, c.e2e_coords, 18);
}

std::vector<Entry> entries() {
  const Tensor seq = kink_free({4, 2, 4, 4}, 21);
  const Tensor k2 = uniform({3, 2, 3, 3}, 22, -1.0, 1.0);
  const Tensor b2 = uniform({3}, 23, -1.0, 1.0);
  const Tensor k3 = uniform({2, 2, 3, 1, 1}, 24, -1.0, 1.0);
  const Tensor spread = spread_frames({4, 2, 2, 2}, 3);
  std::vector<Entry> e;
  auto add_op = [&](std::string name, ScalarFn fn, std::vector<Tensor> in) {
    e.push_back({std::move(name), false, [fn, in](const GradCheckSuiteConfig& c) {
                   return op(c, fn, in);
                 }});
  };
  add_op("conv2d", [](Tape&, std::span<const Var> v) {
    return contract(conv2d(v[0], v[1], v[2], 1, 1));
  }, {seq, k2, b2});
  add_op("conv2d_stride2", [](Tape&, std::span<const Var> v) {
    return contract(conv2d(v[0], v[1], std::nullopt, 2, 0));
  }, {seq, k2});
  add_op("conv3d_t3", [](Tape&, std::span<const Var> v) {
    return contract(conv3d_t3(v[0], v[1]));
  }, {seq, k3});
  add_op("cyclic_window_conv", [](Tape&, std::span<const Var> v) {
    return contract(cyclic_window_conv(v[0], v[1], 3));
  }, {seq, k3});
  for (auto mode : {Reduction::mean, Reduction::max, Reduction::median})
    add_op("reduce_" + to_string(mode), [mode](Tape&, std::span<const Var> v) {
      return contract(reduce(v[0], 0, mode));
    }, {seq});
  add_op("abs", [](Tape&, std::span<const Var> v) { return contract(abs(v[0])); }, {seq});
  add_op("leaky_relu", [](Tape&, std::span<const Var> v) { return contract(leaky_relu(v[0])); },
         {seq});
  add_op("add", [](Tape&, std::span<const Var> v) { return contract(add(v[0], v[1])); },
         {seq, uniform({2, 4, 4}, 25, -1.0, 1.0)});
  add_op("sub", [](Tape&, std::span<const Var> v) { return contract(sub(v[0], v[1])); },
         {seq, uniform({4, 2, 4, 4}, 26, -1.0, 1.0)});
  add_op("mul_scalar", [](Tape&, std::span<const Var> v) {
    return contract(mul_scalar(v[0], v[1]));
  }, {seq, Tensor::scalar(0.3)});
  add_op("max_pool2x2", [](Tape&, std::span<const Var> v) { return contract(max_pool2x2(v[0])); },
         {seq});
  add_op("slice_concat", [](Tape&, std::span<const Var> v) {
    return contract(concat(slice(v[0], 1, 2), slice(v[0], 0, 2), 1));
  }, {seq});
  add_op("template_diff", [](Tape&, std::span<const Var> v) {
    return contract(template_diff(FeatureSequence(v[0])).maps);
  }, {spread});
  add_op("template_multi_diff", [](Tape&, std::span<const Var> v) {
    return contract(template_multi_diff(FeatureSequence(v[0])).maps);
  }, {spread});
  add_op("template_static_excl_mean", [](Tape&, std::span<const Var> v) {
    return contract(template_static_excl(FeatureSequence(v[0]), Reduction::mean).maps);
  }, {spread});
  add_op("template_static_excl_median", [](Tape&, std::span<const Var> v) {
    return contract(template_static_excl(FeatureSequence(v[0]), Reduction::median).maps);
  }, {spread});
  for (auto mode : {FusionMode::micro, FusionMode::global, FusionMode::adaptive})
    e.push_back({"fuse_" + to_string(mode), false,
                 [mode](const GradCheckSuiteConfig& c) { return fusion_check(c, mode); }});
  e.push_back({"triplet_loss", false, [](const GradCheckSuiteConfig& c) {
                 std::vector<Tensor> feats;
                 for (std::uint64_t i = 0; i < 6; ++i) feats.push_back(uniform({5}, 40 + i, -1.0, 1.0));
                 const std::vector<int> labels{1, 1, 2, 2, 3, 3};
                 return grad_check([&](Tape&, std::span<const Var> v) {
                   return triplet_loss_ba(v, labels, TripletConfig{}).loss;
                 }, feats, c.step, c.op_tolerance, 0, 1);
               }});
  e.push_back({"end_to_end", true, end_to_end});
  return e;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& e : entries()) names.push_back(e.name);
  return names;
}

std::vector<OpCheck> run_gradcheck_suite(const GradCheckSuiteConfig& cfg, const std::string& only) {
  const auto all = entries();
  std::vector<OpCheck> out;
  for (const auto& e : all) {
    if (!only.empty() && e.name != only) continue;
    OpCheck row;
    row.name = e.name;
    row.tolerance = e.end_to_end ? cfg.e2e_tolerance : cfg.op_tolerance;
    const auto t0 = std::chrono::steady_clock::now();
    row.result = e.run(cfg);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(row.result.max_rel_error))
      throw NumericError("gradcheck " + e.name + ": non-finite relative error");
    out.push_back(row);
  }
  if (!only.empty() && out.empty()) {
    std::string list;
    for (const auto& e : all) list += (list.empty() ? "" : ", ") + e.name;
    throw ConfigError("unknown gradcheck op '" + only + "' (expected one of: " + list + ")");
  }
  return out;
}

}  // namespace scn
