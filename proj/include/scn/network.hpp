#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scn/fusion.hpp"
#include "scn/layers.hpp"
#include "scn/templates.hpp"

namespace scn {

enum class TemplateChoice { none, diff, multi_diff, static_excl_mean, static_excl_median };

TemplateChoice parse_template_choice(const std::string& s);
std::string to_string(TemplateChoice c);
FusionMode parse_fusion_mode(const std::string& s);
std::string to_string(FusionMode m);
Reduction parse_reduction(const std::string& s);
std::string to_string(Reduction r);

struct ModelConfig {
  std::array<std::size_t, 3> channels{32, 64, 128};
  std::size_t in_channels = 1;
  std::size_t height = 64;
  std::size_t width = 44;
  TemplateChoice bie_template = TemplateChoice::static_excl_median;
  FusionMode bie_fusion = FusionMode::adaptive;
  unsigned bie_stages = 0b111;  // bit s enables the extractor of stage s+1
  bool mfa_enabled = true;
  std::size_t mfa_window = 7;
  Reduction mfa_within = Reduction::max;
  Reduction mfa_final = Reduction::max;  // also the plain pooling when MFA is off

  bool bie_active(std::size_t stage) const {
    return bie_template != TemplateChoice::none && ((bie_stages >> stage) & 1u);
  }
  void validate() const;
  // Shape of the sequence-level descriptor.
  Shape feature_shape() const;
  std::size_t feature_size() const { return shape_numel(feature_shape()); }
  // Fewest input frames the forward pass accepts.
  std::size_t min_frames() const;
};

struct StageParams {
  ConvParams transition;
  bool pool = false;
  std::optional<FusionParams> bie;
  ConvBlockParams cb;
};

struct MfaParams {
  std::size_t window = 7;
  Tensor temporal_kernel;  // [C, C, 3, 1, 1]
  Reduction within = Reduction::max;
  Reduction final_reduce = Reduction::max;
};

using NamedParam = std::pair<std::string, Tensor*>;

struct ScnParams {
  ModelConfig config;
  std::array<StageParams, 3> stages;
  std::optional<MfaParams> mfa;

  // Every trainable tensor in a fixed order.
  std::vector<NamedParam> named();
  void zero_grads();
};

ScnParams init_params(const ModelConfig& config, std::uint64_t seed);

// Transition of one stage: lrelu(conv3x3) followed by 2x2 max pooling when
// the stage pools.
Var transition(StageParams& stage, Var x);
// transition -> extractor -> convolutional block for stage index 0..2.
FeatureSequence run_stage(ScnParams& params, std::size_t stage, const FeatureSequence& input);
// Cyclic sliding-window temporal aggregation to a [C, H, W] descriptor.
Var mfa_forward(MfaParams& params, const FeatureSequence& f);
// frames: [n, in_channels, height, width]; returns the [C, H, W] descriptor.
Var scn_forward(ScnParams& params, Var frames);

// Motion templates computed at each stage during a forward pass; empty for
// stages without an extractor.
std::array<std::optional<MotionTemplate>, 3> stage_templates(ScnParams& params, Var frames);

// Window evaluations performed by the aggregator: n with the cyclic
// extension, n - L + 1 without it.
std::size_t num_windows(std::size_t n, std::size_t window, bool cyclic = true);

// Checkpoint file: a text manifest of names and shapes followed by one
// tensor snapshot per entry.
struct Checkpoint {
  std::uint64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, std::uint64_t step,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors);
Checkpoint read_checkpoint(const std::string& path);
// Copies every model parameter out of the checkpoint, validating shapes.
// Entries prefixed "optim." belong to the optimiser and are skipped; any
// other name the model lacks is an error.
void load_params(ScnParams& params, const Checkpoint& ckpt);

}  // namespace scn
