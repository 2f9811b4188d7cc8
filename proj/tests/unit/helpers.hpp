#pragma once

#include <cmath>
#include <random>

#include "doctest.h"
#include "scn/tensor.hpp"

namespace scn::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Magnitudes in [0.2, 1] with random signs: no abs or leaky-relu kinks.
inline Tensor kink_free(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, 0.2, 1.0);
  std::mt19937_64 rng(seed ^ 0xabc);
  for (auto& v : t.values())
    if (rng() & 1) v = -v;
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Frames of a 1x1 single-channel sequence.
inline Tensor scalar_frames(std::initializer_list<double> v) {
  return Tensor({v.size(), 1, 1, 1}, std::vector<double>(v));
}

}  // namespace scn::test
