#pragma once

#include "scn/autodiff.hpp"

namespace scn {

/// Per-frame feature maps [n, C, H, W].
class FeatureSequence {
 public:
  explicit FeatureSequence(Var frames);
  Var frames() const { return frames_; }
  std::size_t size() const { return frames_.dim(0); }

 private:
  Var frames_;
};

enum class TemplateKind { diff, multi_diff, static_excl };

/// Motion maps [m, C, H, W]; maps[k] describes source frame k + center_offset.
struct MotionTemplate {
  TemplateKind kind;
  Var maps;
  std::size_t center_offset = 0;

  std::size_t size() const { return maps.dim(0); }
};

// maps[k] = |F[k+1] - F[k]|, k = 0..n-2.
MotionTemplate template_diff(const FeatureSequence& f);
// maps[k] = |F[k+2] - F[k+1]| + |F[k+1] - F[k]|, k = 0..n-3.
MotionTemplate template_multi_diff(const FeatureSequence& f);
// maps[k] = |F[k] - filter(F)|; filter is mean or median over frames.
MotionTemplate template_static_excl(const FeatureSequence& f, Reduction filter);

// Frames a template of this kind needs, and how many maps it yields.
std::size_t template_min_frames(TemplateKind kind);
std::size_t template_length(TemplateKind kind, std::size_t n);
std::size_t template_offset(TemplateKind kind);

}  // namespace scn
