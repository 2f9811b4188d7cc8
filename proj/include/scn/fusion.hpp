#pragma once

#include <optional>
#include <random>

#include "scn/layers.hpp"
#include "scn/templates.hpp"

namespace scn {

enum class FusionMode { micro, global, adaptive };

/// Trainable state of one behavioural information extractor. Only the
/// fields used by the mode are present.
struct FusionParams {
  FusionMode mode = FusionMode::micro;
  std::optional<Tensor> w;                        // micro, global: one value
  std::optional<ConvParams> mix;                  // global: [C, 2C, 1, 1]
  std::optional<ConvBlockParams> template_block;  // adaptive

  void validate(std::size_t channels) const;
};

// A freshly initialised extractor is an identity map on the appearance
// path: w = 0, and the last convolution of the template block is zero. The
// remaining weights are random so gradients can leave the initial point.
FusionParams init_fusion(FusionMode mode, std::size_t channels, std::mt19937_64& rng);

// output[k] = F[k + offset] + w * T[k]; length follows the template.
FeatureSequence fuse_micro(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p);
// output[k] = F[k] + w * conv1x1(cat(mean(T), max(T))); length n.
FeatureSequence fuse_global(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p);
// output[k] = CB(F[k + offset]) + CB_T(T[k]); CB_T is the residual-free
// branch of a block with its own weights.
FeatureSequence fuse_adaptive(const FeatureSequence& f, const MotionTemplate& t, FusionParams& p,
                              ConvBlockParams& cb);

class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace scn
