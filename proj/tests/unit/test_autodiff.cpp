#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "scn/autodiff.hpp"
#include "scn/gradcheck.hpp"

using namespace scn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Values bounded away from zero so abs / leaky-relu kinks are never crossed.
Tensor kink_free(Shape shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed, 0.2, 1.0);
  std::mt19937_64 rng(seed ^ 0xabc);
  for (auto& v : t.values())
    if (rng() & 1) v = -v;
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

constexpr double kOpTol = 1e-6;
constexpr double kStep = 1e-5;

}  // namespace

TEST_CASE("conv2d examples") {
  Tape tape;
  SUBCASE("1x1 identity kernel") {
    Tensor x = random_tensor({1, 3, 3}, 1);
    Var y = conv2d(tape.constant(x), tape.constant(Tensor({1, 1, 1, 1}, 1.0)), std::nullopt);
    CHECK(y.value() == x);
  }
  SUBCASE("zero kernel") {
    Var y = conv2d(tape.constant(random_tensor({2, 5, 4}, 2)), tape.constant(Tensor({3, 2, 3, 3})),
                   std::nullopt, 1, 1);
    for (double v : y.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("hand sum") {
    Var y = conv2d(tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4})),
                   tape.constant(Tensor({1, 1, 2, 2}, {1, 0, 0, 1})), std::nullopt);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.value()[0] == 5.0);
  }
  SUBCASE("output size formula") {
    Var y = conv2d(tape.constant(random_tensor({2, 7, 6}, 3)),
                   tape.constant(random_tensor({4, 2, 3, 2}, 4)), std::nullopt, 2, 1);
    CHECK(y.shape() == Shape{4, (7 + 2 - 3) / 2 + 1, (6 + 2 - 2) / 2 + 1});
  }
}

TEST_CASE("conv2d errors name the axis") {
  Tape tape;
  Var x = tape.constant(Tensor({2, 4, 4}));
  CHECK_THROWS_WITH_AS(conv2d(x, tape.constant(Tensor({1, 3, 3, 3})), std::nullopt),
                       doctest::Contains("channel axis"), DimensionError);
  CHECK_THROWS_WITH_AS(conv2d(x, tape.constant(Tensor({1, 2, 5, 1})), std::nullopt),
                       doctest::Contains("height"), DimensionError);
  CHECK_THROWS_AS(conv2d(x, tape.constant(Tensor({1, 2, 1, 1})), std::nullopt, 0), DimensionError);
}

TEST_CASE("conv2d matrix path matches the scalar reference") {
  for (std::size_t stride : {1u, 2u})
    for (std::size_t pad : {0u, 1u, 2u}) {
      Tape tape;
      Tensor x = random_tensor({3, 2, 9, 7}, 10 + stride * 3 + pad);
      Tensor k = random_tensor({4, 2, 3, 3}, 20 + pad);
      Tensor b = random_tensor({4}, 30);
      Var y = conv2d(tape.constant(x), tape.constant(k), tape.constant(b), stride, pad);
      CHECK(max_abs_diff(y.value(), conv2d_reference(x, k, &b, stride, pad)) < 1e-13);
    }
}

TEST_CASE("conv2d is linear in its input") {
  Tape tape;
  Tensor k = random_tensor({3, 2, 3, 3}, 5);
  Tensor x = random_tensor({2, 8, 6}, 6), y = random_tensor({2, 8, 6}, 7);
  const double a = 0.7, b = -1.3;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto run = [&](const Tensor& in) {
    return conv2d(tape.constant(in), tape.constant(k), std::nullopt, 1, 1).value();
  };
  const Tensor lhs = run(mix), cx = run(x), cy = run(y);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double rhs = a * cx[i] + b * cy[i];
    CHECK(std::fabs(lhs[i] - rhs) <= 1e-12 * std::max(1.0, std::fabs(rhs)));
  }
}

TEST_CASE("conv3d_t3 examples") {
  Tape tape;
  SUBCASE("identity centre slice") {
    const std::size_t c = 3;
    Tensor k({c, c, 3, 1, 1});
    for (std::size_t i = 0; i < c; ++i) k[(i * c + i) * 3 + 1] = 1.0;
    Tensor x = random_tensor({4, c, 2, 3}, 8);
    CHECK(conv3d_t3(tape.constant(x), tape.constant(k)).value() == x);
  }
  SUBCASE("single frame with all-ones kernel") {
    Tensor x = random_tensor({1, 1, 2, 2}, 9);
    CHECK(conv3d_t3(tape.constant(x), tape.constant(Tensor({1, 1, 3, 1, 1}, 1.0))).value() == x);
  }
  SUBCASE("padded sums") {
    Var y = conv3d_t3(tape.constant(Tensor({3, 1, 1, 1}, {1, 2, 3})),
                      tape.constant(Tensor({1, 1, 3, 1, 1}, 1.0)));
    CHECK(y.value() == Tensor({3, 1, 1, 1}, {3, 6, 5}));
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(conv3d_t3(tape.constant(Tensor({2, 2, 1, 1})),
                              tape.constant(Tensor({3, 3, 3, 1, 1}))),
                    DimensionError);
  }
  SUBCASE("matches reference, including segmented") {
    Tensor x = random_tensor({6, 3, 2, 2}, 11);
    Tensor k = random_tensor({3, 3, 3, 1, 1}, 12);
    for (std::size_t seg : {0u, 2u, 3u})
      CHECK(max_abs_diff(conv3d_t3(tape.constant(x), tape.constant(k), seg).value(),
                         conv3d_t3_reference(x, k, seg)) < 1e-13);
  }
}

TEST_CASE("cyclic_window_conv equals gathering windows then segmented conv3d_t3") {
  Tape tape;
  const std::size_t n = 7, c = 2, window = 4;
  Tensor x = random_tensor({n, c, 2, 3}, 13);
  Tensor k = random_tensor({c, c, 3, 1, 1}, 14);
  const std::size_t fs = c * 6;
  Tensor gathered({n * window, c, 2, 3});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < window; ++i)
      std::copy_n(x.data() + ((j + i) % n) * fs, fs, gathered.data() + (j * window + i) * fs);
  const Tensor oracle = conv3d_t3_reference(gathered, k, window);
  const Tensor fast = cyclic_window_conv(tape.constant(x), tape.constant(k), window).value();
  CHECK(fast.shape() == Shape{n, window, c, 2, 3});
  CHECK(max_abs_diff(fast.reshaped(oracle.shape()), oracle) < 1e-13);
  CHECK_THROWS_AS(cyclic_window_conv(tape.constant(x), tape.constant(k), n + 1),
                  SequenceTooShortError);
}

TEST_CASE("reduce examples") {
  Tape tape;
  auto r = [&](std::vector<double> v, Reduction m) {
    const std::size_t n = v.size();
    return reduce(tape.constant(Tensor({n}, std::move(v))), 0, m).value()[0];
  };
  CHECK(r({1, 2, 9}, Reduction::median) == 2.0);
  CHECK(r({1, 2, 3, 10}, Reduction::median) == 2.5);
  CHECK(r({-1, 0, 4}, Reduction::max) == 4.0);
  CHECK(r({1, 2, 3, 10}, Reduction::mean) == 4.0);
  CHECK_THROWS_AS(reduce(tape.constant(Tensor({2, 2})), 2, Reduction::mean), DimensionError);
}

TEST_CASE("reduce consistency") {
  Tape tape;
  Tensor c({5, 3, 2}, 1.25);
  for (double v : reduce(tape.constant(c), 0, Reduction::mean).value().values()) CHECK(v == 1.25);
  Tensor x = random_tensor({6, 4, 3}, 15);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const Tensor mx = reduce(tape.constant(x), axis, Reduction::max).value();
    const Tensor mn = reduce(tape.constant(x), axis, Reduction::mean).value();
    for (std::size_t i = 0; i < mx.size(); ++i) CHECK(mx[i] >= mn[i]);
  }
}

TEST_CASE("median backward splits even counts and max routes to the first tie") {
  Tape tape;
  Var x = tape.variable(Tensor({4}, {3, 1, 10, 2}));
  tape.backward(reduce(x, 0, Reduction::median));
  CHECK(tape.grad(x)[0] == 0.5);
  CHECK(tape.grad(x)[3] == 0.5);
  CHECK(tape.grad(x)[2] == 0.0);

  Tape t2;
  Var y = t2.variable(Tensor({3}, {4, 4, 1}));
  t2.backward(reduce(y, 0, Reduction::max));
  CHECK(t2.grad(y)[0] == 1.0);
  CHECK(t2.grad(y)[1] == 0.0);
}

TEST_CASE("elementwise examples") {
  Tape tape;
  CHECK(abs(tape.constant(Tensor({2}, {-2, 3}))).value() == Tensor({2}, {2, 3}));
  CHECK(leaky_relu(tape.constant(Tensor::scalar(-1.0)), 0.01).value()[0] == doctest::Approx(-0.01));
  CHECK(mul_scalar(tape.constant(Tensor({2}, {1, 2})), tape.constant(Tensor::scalar(0.5))).value() ==
        Tensor({2}, {0.5, 1.0}));
  CHECK(scale(tape.constant(Tensor({2}, {1, 2})), 0.5).value() == Tensor({2}, {0.5, 1.0}));

  Var seq = tape.constant(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  CHECK(add(seq, tape.constant(Tensor({2}, {10, 20}))).value() ==
        Tensor({3, 2}, {11, 22, 13, 24, 15, 26}));
  CHECK(add(seq, tape.constant(Tensor({1, 2}, {10, 20}))).value() ==
        Tensor({3, 2}, {11, 22, 13, 24, 15, 26}));
  CHECK_THROWS_AS(add(seq, tape.constant(Tensor({3}))), DimensionError);
}

TEST_CASE("abs backward at zero is zero") {
  Tape tape;
  Var x = tape.variable(Tensor({3}, {0.0, -2.0, 2.0}));
  tape.backward(weighted_sum(abs(x), Tensor({3}, 1.0)));
  CHECK(tape.grad(x)[0] == 0.0);
  CHECK(tape.grad(x)[1] == -1.0);
  CHECK(tape.grad(x)[2] == 1.0);
}

TEST_CASE("max_pool2x2 examples") {
  Tape tape;
  CHECK(max_pool2x2(tape.constant(Tensor({1, 2, 2}, {1, 2, 3, 4}))).value() ==
        Tensor({1, 1, 1}, {4}));
  CHECK(max_pool2x2(tape.constant(Tensor({2, 4, 6}, 3.0))).value() == Tensor({2, 2, 3}, 3.0));
  CHECK_THROWS_WITH_AS(max_pool2x2(tape.constant(Tensor({1, 3, 4}))), doctest::Contains("height"),
                       DimensionError);
  CHECK_THROWS_WITH_AS(max_pool2x2(tape.constant(Tensor({1, 4, 5}))), doctest::Contains("width"),
                       DimensionError);

  Var x = tape.variable(Tensor({1, 2, 2}, 4.0));
  tape.backward(max_pool2x2(x));
  CHECK(tape.grad(x)[0] == 1.0);
  CHECK(tape.grad(x)[1] == 0.0);
  CHECK(tape.grad(x)[2] == 0.0);
  CHECK(tape.grad(x)[3] == 0.0);
}

TEST_CASE("zero upstream gradient propagates zeros") {
  Tape tape;
  Var x = tape.variable(kink_free({2, 1, 4, 4}, 16));
  Var k = tape.variable(random_tensor({2, 1, 3, 3}, 17));
  Var y = max_pool2x2(leaky_relu(conv2d(x, k, std::nullopt, 1, 1)));
  std::vector<double> zero(y.value().size(), 0.0);
  tape.backward(y, zero);
  for (double g : tape.grad(x)) CHECK(g == 0.0);
  for (double g : tape.grad(k)) CHECK(g == 0.0);
}

TEST_CASE("grad_check examples") {
  CHECK(grad_check([](Var v) { return scale(v, 2.0); }, random_tensor({5}, 18), kStep, 1e-10) <
        1e-10);
  CHECK(grad_check([](Var v) { return abs(v); }, random_tensor({6}, 19, 1.5, 3.0), kStep, 1e-6) <
        1e-6);
}

TEST_CASE("grad_check flags a wrong gradient") {
  // exp-like op with a deliberately wrong backward rule.
  auto broken = [](Tape& tape, std::span<const Var> v) {
    Tensor out(v[0].shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[0].value()[i] * v[0].value()[i];
    Var y = tape.record(std::move(out), {v[0]}, [](Tape& t, std::size_t self) {
      auto g = t.grad(self);
      auto gx = t.grad(t.inputs(self)[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return weighted_sum(y, Tensor(y.shape(), 1.0));
  };
  CHECK_FALSE(grad_check(broken, {random_tensor({4}, 20, 1.0, 2.0)}, kStep, 1e-6).passed);
}

TEST_CASE("per-operation gradient soundness") {
  const Tensor seq = kink_free({4, 2, 4, 4}, 21);
  const Tensor k2 = random_tensor({3, 2, 3, 3}, 22);
  const Tensor b2 = random_tensor({3}, 23);
  const Tensor k3 = random_tensor({2, 2, 3, 1, 1}, 24);

  auto check = [](const char* name, const ScalarFn& fn, std::vector<Tensor> inputs) {
    const auto r = grad_check(fn, inputs, kStep, kOpTol, 0, 1);
    INFO(name << " max_rel_error=" << r.max_rel_error);
    CHECK(r.passed);
  };
  auto contract = [](Var y) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Tensor w(y.shape());
    for (auto& v : w.values()) v = u(rng);
    return weighted_sum(y, w);
  };

  check("conv2d", [&](Tape&, std::span<const Var> v) {
    return contract(conv2d(v[0], v[1], v[2], 1, 1));
  }, {seq, k2, b2});
  check("conv2d stride 2", [&](Tape&, std::span<const Var> v) {
    return contract(conv2d(v[0], v[1], std::nullopt, 2, 0));
  }, {seq, k2});
  check("conv3d_t3", [&](Tape&, std::span<const Var> v) {
    return contract(conv3d_t3(v[0], v[1]));
  }, {seq, k3});
  check("cyclic_window_conv", [&](Tape&, std::span<const Var> v) {
    return contract(cyclic_window_conv(v[0], v[1], 3));
  }, {seq, k3});
  for (auto mode : {Reduction::mean, Reduction::max, Reduction::median})
    check("reduce", [&](Tape&, std::span<const Var> v) {
      return contract(reduce(v[0], 0, mode));
    }, {seq});
  check("reduce median even axis", [&](Tape&, std::span<const Var> v) {
    return contract(reduce(v[0], 2, Reduction::median));
  }, {seq});
  check("abs", [&](Tape&, std::span<const Var> v) { return contract(abs(v[0])); }, {seq});
  check("leaky_relu", [&](Tape&, std::span<const Var> v) { return contract(leaky_relu(v[0])); },
        {seq});
  check("add broadcast", [&](Tape&, std::span<const Var> v) {
    return contract(add(v[0], v[1]));
  }, {seq, random_tensor({2, 4, 4}, 25)});
  check("sub", [&](Tape&, std::span<const Var> v) { return contract(sub(v[0], v[1])); },
        {seq, random_tensor({4, 2, 4, 4}, 26)});
  check("mul_scalar", [&](Tape&, std::span<const Var> v) {
    return contract(mul_scalar(v[0], v[1]));
  }, {seq, Tensor::scalar(0.3)});
  check("max_pool2x2", [&](Tape&, std::span<const Var> v) {
    return contract(max_pool2x2(v[0]));
  }, {seq});
  check("slice/concat", [&](Tape&, std::span<const Var> v) {
    return contract(concat(slice(v[0], 1, 2), slice(v[0], 0, 2), 1));
  }, {seq});
}

TEST_CASE("forward passes are deterministic") {
  auto run = [] {
    Tape tape;
    Var x = tape.constant(random_tensor({3, 2, 6, 4}, 27));
    Var y = conv2d(x, tape.constant(random_tensor({2, 2, 3, 3}, 28)), std::nullopt, 1, 1);
    return reduce(max_pool2x2(leaky_relu(y)), 0, Reduction::median).value();
  };
  const Tensor a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("snapshot format") {
  Tensor t({2, 1}, {1.0, -0.5});
  std::stringstream ss;
  write_snapshot(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.rfind("shape: 2 1\n", 0) == 0);
  CHECK(bytes.size() == 11 + 16);
  // 1.0 little-endian: 00 .. 00 f0 3f
  CHECK(static_cast<unsigned char>(bytes[11 + 7]) == 0x3f);
  CHECK(static_cast<unsigned char>(bytes[11 + 6]) == 0xf0);
  CHECK(read_snapshot(ss) == t);
}
