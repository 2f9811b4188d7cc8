#include "scn/layers.hpp"

#include <cmath>

namespace scn {

ConvParams init_conv(std::size_t c_out, std::size_t c_in, std::size_t k, std::mt19937_64& rng) {
  ConvParams p = zero_conv(c_out, c_in, k);
  const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : p.kernel.values()) v = u(rng);
  return p;
}

ConvParams zero_conv(std::size_t c_out, std::size_t c_in, std::size_t k) {
  return {Tensor({c_out, c_in, k, k}), Tensor({c_out})};
}

ConvBlockParams init_conv_block(std::size_t channels, std::mt19937_64& rng) {
  ConvBlockParams b;
  b.conv1 = init_conv(channels, channels, 3, rng);
  b.conv2 = init_conv(channels, channels, 3, rng);
  return b;
}

Var apply_conv(ConvParams& p, Var x) {
  Tape& tape = *x.tape;
  const std::size_t pad = p.kernel.dim(2) / 2;
  return conv2d(x, tape.param(p.kernel), tape.param(p.bias), 1, pad);
}

Var conv_branch(ConvBlockParams& p, Var x) {
  return leaky_relu(apply_conv(p.conv2, leaky_relu(apply_conv(p.conv1, x))));
}

Var conv_block(ConvBlockParams& p, Var x) {
  Var residual = p.projection ? apply_conv(*p.projection, x) : x;
  const std::size_t axis = x.shape().size() == 4 ? 1 : 0;
  if (residual.dim(axis) != p.conv2.out_channels())
    throw DimensionError("conv_block: residual has " + std::to_string(residual.dim(axis)) +
                         " channels, block produces " + std::to_string(p.conv2.out_channels()));
  return add(conv_branch(p, x), residual);
}

}  // namespace scn
