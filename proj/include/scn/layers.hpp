#pragma once

#include <optional>
#include <random>

#include "scn/autodiff.hpp"

namespace scn {

struct ConvParams {
  Tensor kernel;  // [C_out, C_in, kh, kw]
  Tensor bias;    // [C_out]

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
};

/// Residual block: y = lrelu(conv2(lrelu(conv1(x)))) + residual(x), where
/// residual is the identity or a declared 1x1 projection.
struct ConvBlockParams {
  ConvParams conv1;
  ConvParams conv2;
  std::optional<ConvParams> projection;
};

// Uniform in [-b, b] with b = sqrt(6 / fan_in); zero bias.
ConvParams init_conv(std::size_t c_out, std::size_t c_in, std::size_t k, std::mt19937_64& rng);
ConvParams zero_conv(std::size_t c_out, std::size_t c_in, std::size_t k);
ConvBlockParams init_conv_block(std::size_t channels, std::mt19937_64& rng);

// "Same" 3x3 convolution (or 1x1 for pointwise kernels) with bias.
Var apply_conv(ConvParams& p, Var x);
// The non-residual half of a block: lrelu(conv2(lrelu(conv1(x)))).
Var conv_branch(ConvBlockParams& p, Var x);
Var conv_block(ConvBlockParams& p, Var x);

}  // namespace scn
