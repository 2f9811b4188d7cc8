#include "scn/templates.hpp"

namespace scn {

FeatureSequence::FeatureSequence(Var frames) : frames_(frames) {
  if (frames.shape().size() != 4)
    throw DimensionError("feature sequence must be [n,C,H,W], got " + shape_str(frames.shape()));
}

std::size_t template_min_frames(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::diff: return 2;
    case TemplateKind::multi_diff: return 3;
    case TemplateKind::static_excl: return 1;
  }
  return 1;
}

std::size_t template_length(TemplateKind kind, std::size_t n) {
  return n + 1 - template_min_frames(kind);
}

std::size_t template_offset(TemplateKind kind) { return kind == TemplateKind::multi_diff ? 1 : 0; }

static void require_frames(const FeatureSequence& f, TemplateKind kind, const char* name) {
  if (f.size() < template_min_frames(kind))
    throw SequenceTooShortError(std::string(name) + ": needs at least " +
                                std::to_string(template_min_frames(kind)) + " frames, got " +
                                std::to_string(f.size()));
}

MotionTemplate template_diff(const FeatureSequence& f) {
  require_frames(f, TemplateKind::diff, "template_diff");
  const std::size_t n = f.size();
  Var d = abs(sub(slice(f.frames(), 1, n - 1), slice(f.frames(), 0, n - 1)));
  return {TemplateKind::diff, d, 0};
}

MotionTemplate template_multi_diff(const FeatureSequence& f) {
  require_frames(f, TemplateKind::multi_diff, "template_multi_diff");
  const std::size_t n = f.size();
  Var x = f.frames();
  Var forward = abs(sub(slice(x, 2, n - 2), slice(x, 1, n - 2)));
  Var backward = abs(sub(slice(x, 1, n - 2), slice(x, 0, n - 2)));
  return {TemplateKind::multi_diff, add(forward, backward), 1};
}

MotionTemplate template_static_excl(const FeatureSequence& f, Reduction filter) {
  require_frames(f, TemplateKind::static_excl, "template_static_excl");
  if (filter == Reduction::max)
    throw ConfigError("template_static_excl: static filter must be mean or median");
  Var static_part = reduce(f.frames(), 0, filter);
  return {TemplateKind::static_excl, abs(sub(f.frames(), static_part)), 0};
}

}  // namespace scn
