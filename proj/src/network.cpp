#include "scn/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace scn {

TemplateChoice parse_template_choice(const std::string& s) {
  if (s == "none") return TemplateChoice::none;
  if (s == "diff") return TemplateChoice::diff;
  if (s == "multi_diff") return TemplateChoice::multi_diff;
  if (s == "static_excl_mean") return TemplateChoice::static_excl_mean;
  if (s == "static_excl_median") return TemplateChoice::static_excl_median;
  throw ConfigError("unknown template '" + s +
                    "' (expected diff, multi_diff, static_excl_mean, static_excl_median, none)");
}

std::string to_string(TemplateChoice c) {
  switch (c) {
    case TemplateChoice::none: return "none";
    case TemplateChoice::diff: return "diff";
    case TemplateChoice::multi_diff: return "multi_diff";
    case TemplateChoice::static_excl_mean: return "static_excl_mean";
    case TemplateChoice::static_excl_median: return "static_excl_median";
  }
  return "?";
}

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "micro") return FusionMode::micro;
  if (s == "global") return FusionMode::global;
  if (s == "adaptive") return FusionMode::adaptive;
  throw ConfigError("unknown fusion '" + s + "' (expected micro, global, adaptive)");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::micro: return "micro";
    case FusionMode::global: return "global";
    case FusionMode::adaptive: return "adaptive";
  }
  return "?";
}

Reduction parse_reduction(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "max") return Reduction::max;
  if (s == "median") return Reduction::median;
  throw ConfigError("unknown reduction '" + s + "' (expected mean, max, median)");
}

std::string to_string(Reduction r) {
  switch (r) {
    case Reduction::mean: return "mean";
    case Reduction::max: return "max";
    case Reduction::median: return "median";
  }
  return "?";
}

namespace {

TemplateKind kind_of(TemplateChoice c) {
  switch (c) {
    case TemplateChoice::diff: return TemplateKind::diff;
    case TemplateChoice::multi_diff: return TemplateKind::multi_diff;
    default: return TemplateKind::static_excl;
  }
}

MotionTemplate compute_template(TemplateChoice c, const FeatureSequence& f) {
  switch (c) {
    case TemplateChoice::diff: return template_diff(f);
    case TemplateChoice::multi_diff: return template_multi_diff(f);
    case TemplateChoice::static_excl_mean: return template_static_excl(f, Reduction::mean);
    case TemplateChoice::static_excl_median: return template_static_excl(f, Reduction::median);
    case TemplateChoice::none: break;
  }
  throw ConfigError("no template configured");
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels == 0 || channels[0] == 0)
    throw ConfigError("model channels must be positive");
  for (std::size_t i = 1; i < 3; ++i)
    if (channels[i] <= channels[i - 1])
      throw ConfigError("model channel plan must be strictly increasing");
  if (height % 4 != 0 || width % 4 != 0)
    throw ConfigError("input height and width must be divisible by 4 (two 2x2 pools), got " +
                      std::to_string(height) + "x" + std::to_string(width));
  if (bie_stages > 0b111) throw ConfigError("bie.stages is a 3-bit mask");
  if (mfa_enabled && mfa_window < 3)
    throw ConfigError("mfa window must be at least 3, got " + std::to_string(mfa_window));
  if (mfa_within == Reduction::median || mfa_final == Reduction::median)
    throw ConfigError("aggregator reductions must be mean or max");
}

Shape ModelConfig::feature_shape() const { return {channels[2], height / 4, width / 4}; }

std::size_t ModelConfig::min_frames() const {
  std::size_t need = mfa_enabled ? mfa_window : 1;
  for (std::size_t s = 3; s-- > 0;) {
    if (!bie_active(s)) continue;
    const TemplateKind k = kind_of(bie_template);
    if (bie_fusion == FusionMode::global)
      need = std::max(need, template_min_frames(k));
    else
      need = std::max(need + template_min_frames(k) - 1, template_min_frames(k));
  }
  return need;
}

std::vector<NamedParam> ScnParams::named() {
  std::vector<NamedParam> out;
  auto conv = [&](const std::string& prefix, ConvParams& c) {
    out.emplace_back(prefix + ".kernel", &c.kernel);
    out.emplace_back(prefix + ".bias", &c.bias);
  };
  auto block = [&](const std::string& prefix, ConvBlockParams& b) {
    conv(prefix + ".conv1", b.conv1);
    conv(prefix + ".conv2", b.conv2);
    if (b.projection) conv(prefix + ".projection", *b.projection);
  };
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string p = "stage" + std::to_string(s + 1);
    auto& st = stages[s];
    conv(p + ".transition", st.transition);
    if (st.bie) {
      if (st.bie->w) out.emplace_back(p + ".bie.w", &*st.bie->w);
      if (st.bie->mix) conv(p + ".bie.mix", *st.bie->mix);
      if (st.bie->template_block) block(p + ".bie.template_block", *st.bie->template_block);
    }
    block(p + ".cb", st.cb);
  }
  if (mfa) out.emplace_back("mfa.temporal_kernel", &mfa->temporal_kernel);
  return out;
}

void ScnParams::zero_grads() {
  for (auto& [name, t] : named()) t->zero_grad();
}

ScnParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ScnParams p;
  p.config = config;
  std::size_t c_in = config.in_channels;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t c = config.channels[s];
    auto& st = p.stages[s];
    st.transition = init_conv(c, c_in, 3, rng);
    st.pool = s > 0;
    if (config.bie_active(s)) st.bie = init_fusion(config.bie_fusion, c, rng);
    st.cb = init_conv_block(c, rng);
    c_in = c;
  }
  if (config.mfa_enabled) {
    MfaParams m;
    m.window = config.mfa_window;
    m.within = config.mfa_within;
    m.final_reduce = config.mfa_final;
    const std::size_t c = config.channels[2];
    m.temporal_kernel = Tensor({c, c, 3, 1, 1});
    const double bound = std::sqrt(6.0 / static_cast<double>(3 * c));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : m.temporal_kernel.values()) v = u(rng);
    p.mfa = std::move(m);
  }
  return p;
}

Var transition(StageParams& stage, Var x) {
  Var y = leaky_relu(apply_conv(stage.transition, x));
  return stage.pool ? max_pool2x2(y) : y;
}

namespace {

FeatureSequence run_stage_impl(ScnParams& params, std::size_t stage, const FeatureSequence& input,
                               std::optional<MotionTemplate>* capture) {
  StageParams& st = params.stages[stage];
  const ModelConfig& cfg = params.config;
  FeatureSequence x(transition(st, input.frames()));
  if (!st.bie) return FeatureSequence(conv_block(st.cb, x.frames()));

  const TemplateKind kind = kind_of(cfg.bie_template);
  if (x.size() < template_min_frames(kind))
    throw SequenceTooShortError("stage " + std::to_string(stage + 1) + ": " +
                                std::to_string(x.size()) + " frames left, template " +
                                to_string(cfg.bie_template) + " needs " +
                                std::to_string(template_min_frames(kind)));
  const MotionTemplate t = compute_template(cfg.bie_template, x);
  if (capture) *capture = t;
  switch (st.bie->mode) {
    case FusionMode::micro:
      return FeatureSequence(conv_block(st.cb, fuse_micro(x, t, *st.bie).frames()));
    case FusionMode::global:
      return FeatureSequence(conv_block(st.cb, fuse_global(x, t, *st.bie).frames()));
    case FusionMode::adaptive:
      return fuse_adaptive(x, t, *st.bie, st.cb);
  }
  throw ConfigError("unknown fusion mode");
}

}  // namespace

FeatureSequence run_stage(ScnParams& params, std::size_t stage, const FeatureSequence& input) {
  return run_stage_impl(params, stage, input, nullptr);
}

std::array<std::optional<MotionTemplate>, 3> stage_templates(ScnParams& params, Var frames) {
  std::array<std::optional<MotionTemplate>, 3> out;
  FeatureSequence f(frames);
  for (std::size_t stage = 0; stage < 3; ++stage)
    f = run_stage_impl(params, stage, f, &out[stage]);
  return out;
}

Var mfa_forward(MfaParams& params, const FeatureSequence& f) {
  const std::size_t n = f.size(), window = params.window;
  if (window < 3) throw ConfigError("mfa window must be at least 3");
  if (n < window)
    throw SequenceTooShortError("mfa: sequence of n = " + std::to_string(n) +
                                " frames is shorter than window L = " + std::to_string(window));
  Tape& tape = *f.frames().tape;
  Var windows = cyclic_window_conv(f.frames(), tape.param(params.temporal_kernel), window);
  Var per_window = reduce(windows, 1, params.within);
  return reduce(per_window, 0, params.final_reduce);
}

Var scn_forward(ScnParams& params, Var frames) {
  const ModelConfig& cfg = params.config;
  const Shape& s = frames.shape();
  if (s.size() != 4 || s[1] != cfg.in_channels || s[2] != cfg.height || s[3] != cfg.width)
    throw DimensionError("scn_forward: expected [n, " + std::to_string(cfg.in_channels) + ", " +
                         std::to_string(cfg.height) + ", " + std::to_string(cfg.width) +
                         "] frames, got " + shape_str(s));
  if (s[0] < cfg.min_frames())
    throw SequenceTooShortError("scn_forward: " + std::to_string(s[0]) +
                                " frames, configuration needs at least " +
                                std::to_string(cfg.min_frames()));
  FeatureSequence f(frames);
  for (std::size_t stage = 0; stage < 3; ++stage) f = run_stage(params, stage, f);
  if (params.mfa) return mfa_forward(*params.mfa, f);
  return reduce(f.frames(), 0, cfg.mfa_final);
}

std::size_t num_windows(std::size_t n, std::size_t window, bool cyclic) {
  if (window == 0 || n < window)
    throw SequenceTooShortError("num_windows: n = " + std::to_string(n) + " < L = " +
                                std::to_string(window));
  return cyclic ? n : n - window + 1;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::string& path, std::uint64_t step,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "scn-checkpoint 1\n";
  out << "step " << step << '\n';
  out << "tensors " << tensors.size() << '\n';
  for (const auto& [name, t] : tensors) {
    out << name;
    for (auto d : t->shape()) out << ' ' << d;
    out << '\n';
  }
  out << "payload\n";
  for (const auto& [name, t] : tensors) write_snapshot(out, *t);
  if (!out) throw Error("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::string line, word;
  if (!std::getline(in, line) || line != "scn-checkpoint 1")
    throw Error(path + ": not an scn checkpoint");
  Checkpoint ck;
  std::size_t count = 0;
  {
    std::getline(in, line);
    std::istringstream ls(line);
    if (!(ls >> word >> ck.step) || word != "step") throw Error(path + ": missing step line");
  }
  {
    std::getline(in, line);
    std::istringstream ls(line);
    if (!(ls >> word >> count) || word != "tensors") throw Error(path + ": missing tensor count");
  }
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw Error(path + ": truncated manifest");
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    Shape shape;
    for (std::size_t d; ls >> d;) shape.push_back(d);
    manifest.emplace_back(name, shape);
  }
  if (!std::getline(in, line) || line != "payload") throw Error(path + ": missing payload marker");
  for (const auto& [name, shape] : manifest) {
    Tensor t = read_snapshot(in);
    if (t.shape() != shape)
      throw Error(path + ": payload for " + name + " has shape " + shape_str(t.shape()) +
                  ", manifest says " + shape_str(shape));
    ck.tensors.emplace_back(name, std::move(t));
  }
  return ck;
}

void load_params(ScnParams& params, const Checkpoint& ckpt) {
  auto named = params.named();
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("optim.", 0) == 0) continue;
    const bool known = std::any_of(named.begin(), named.end(),
                                   [&](const NamedParam& p) { return p.first == name; });
    if (!known) throw ConfigError("checkpoint parameter " + name + " has no place in this model");
  }
  for (auto& [name, t] : named) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw ConfigError("checkpoint lacks parameter " + name);
    if (src->shape() != t->shape())
      throw ConfigError("checkpoint parameter " + name + " has shape " +
                        shape_str(src->shape()) + ", configuration expects " +
                        shape_str(t->shape()));
    *t = *src;
  }
}

}  // namespace scn
