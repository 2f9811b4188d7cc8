#include "scn/fusion.hpp"

namespace scn {
namespace {

const char* mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::micro: return "micro";
    case FusionMode::global: return "global";
    case FusionMode::adaptive: return "adaptive";
  }
  return "?";
}

void require_mode(const FusionParams& p, FusionMode m) {
  if (p.mode != m)
    throw ConfigError(std::string("fusion parameters are for mode ") + mode_name(p.mode) +
                      ", called as " + mode_name(m));
}

// The template must come from this sequence: same map shape, and the
// length/offset its kind implies for a sequence of this length.
void check_alignment(const FeatureSequence& f, const MotionTemplate& t) {
  const Shape& fs = f.frames().shape();
  const Shape& ts = t.maps.shape();
  if (!std::equal(fs.begin() + 1, fs.end(), ts.begin() + 1, ts.end()))
    throw AlignmentError("template maps " + shape_str(ts) + " do not match frames " +
                         shape_str(fs));
  if (f.size() < template_min_frames(t.kind) ||
      t.size() != template_length(t.kind, f.size()) ||
      t.center_offset != template_offset(t.kind))
    throw AlignmentError("template of " + std::to_string(t.size()) + " maps (offset " +
                         std::to_string(t.center_offset) + ") cannot derive from " +
                         std::to_string(f.size()) + " frames");
}

Var aligned_frames(const FeatureSequence& f, const MotionTemplate& t) {
  if (t.size() == f.size()) return f.frames();
  return slice(f.frames(), t.center_offset, t.size());
}

}  // namespace

void FusionParams::validate(std::size_t channels) const {
  const bool need_w = mode != FusionMode::adaptive;
  const bool need_mix = mode == FusionMode::global;
  const bool need_block = mode == FusionMode::adaptive;
  if (w.has_value() != need_w || mix.has_value() != need_mix ||
      template_block.has_value() != need_block)
    throw ConfigError(std::string("fusion parameters do not match mode ") + mode_name(mode));
  if (w && w->size() != 1) throw DimensionError("fusion weight w must hold one value");
  if (mix && (mix->out_channels() != channels || mix->in_channels() != 2 * channels ||
              mix->kernel.dim(2) != 1 || mix->kernel.dim(3) != 1))
    throw DimensionError("global fusion mix kernel must be [C, 2C, 1, 1] for C = " +
                         std::to_string(channels) + ", got " + shape_str(mix->kernel.shape()));
}

FusionParams init_fusion(FusionMode mode, std::size_t channels, std::mt19937_64& rng) {
  FusionParams p;
  p.mode = mode;
  switch (mode) {
    case FusionMode::micro:
      p.w = Tensor::scalar(0.0);
      break;
    case FusionMode::global:
      p.w = Tensor::scalar(0.0);
      p.mix = init_conv(channels, 2 * channels, 1, rng);
      break;
    case FusionMode::adaptive: {
      ConvBlockParams b;
      b.conv1 = init_conv(channels, channels, 3, rng);
      b.conv2 = zero_conv(channels, channels, 3);
      p.template_block = std::move(b);
      break;
    }
  }
  return p;
}

FeatureSequence fuse_micro(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p) {
  require_mode(p, FusionMode::micro);
  check_alignment(f, t);
  Tape& tape = *f.frames().tape;
  return FeatureSequence(add(aligned_frames(f, t), mul_scalar(t.maps, tape.param(*p.w))));
}

FeatureSequence fuse_global(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p) {
  require_mode(p, FusionMode::global);
  check_alignment(f, t);
  p.validate(f.frames().dim(1));
  Tape& tape = *f.frames().tape;
  Var summary = concat(reduce(t.maps, 0, Reduction::mean), reduce(t.maps, 0, Reduction::max), 0);
  Var g = apply_conv(*p.mix, summary);
  return FeatureSequence(add(f.frames(), mul_scalar(g, tape.param(*p.w))));
}

FeatureSequence fuse_adaptive(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p,
                              ConvBlockParams& cb) {
  require_mode(p, FusionMode::adaptive);
  check_alignment(f, t);
  Var appearance = conv_block(cb, aligned_frames(f, t));
  Var motion = conv_branch(*p.template_block, t.maps);
  return FeatureSequence(add(appearance, motion));
}

}  // namespace scn
