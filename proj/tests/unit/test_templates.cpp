#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "scn/gradcheck.hpp"
#include "scn/templates.hpp"

using namespace scn;
using namespace scn::test;

namespace {

std::vector<double> values_of(const MotionTemplate& t) {
  auto v = t.maps.value().values();
  return {v.begin(), v.end()};
}

// Direct per-element evaluation, independent of the tape ops.
Tensor oracle(TemplateKind kind, const Tensor& x, Reduction filter) {
  const std::size_t n = x.dim(0), fs = x.size() / n;
  const std::size_t m = template_length(kind, n);
  Shape s = x.shape();
  s[0] = m;
  Tensor out(s);
  for (std::size_t e = 0; e < fs; ++e) {
    std::vector<double> col(n);
    for (std::size_t t = 0; t < n; ++t) col[t] = x[t * fs + e];
    double stat = 0.0;
    if (kind == TemplateKind::static_excl) {
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      stat = filter == Reduction::mean
                 ? std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n)
                 : (n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]));
    }
    for (std::size_t k = 0; k < m; ++k) {
      double v = 0.0;
      switch (kind) {
        case TemplateKind::diff: v = std::fabs(col[k + 1] - col[k]); break;
        case TemplateKind::multi_diff:
          v = std::fabs(col[k + 2] - col[k + 1]) + std::fabs(col[k + 1] - col[k]);
          break;
        case TemplateKind::static_excl: v = std::fabs(col[k] - stat); break;
      }
      out[k * fs + e] = v;
    }
  }
  return out;
}

MotionTemplate make(TemplateKind kind, const FeatureSequence& f, Reduction filter) {
  switch (kind) {
    case TemplateKind::diff: return template_diff(f);
    case TemplateKind::multi_diff: return template_multi_diff(f);
    default: return template_static_excl(f, filter);
  }
}

}  // namespace

TEST_CASE("difference template examples") {
  Tape tape;
  auto t = template_diff(FeatureSequence(tape.constant(scalar_frames({1, 3, 2}))));
  CHECK(values_of(t) == std::vector<double>{2, 1});
  CHECK(t.center_offset == 0);
  CHECK(t.kind == TemplateKind::diff);
  CHECK(template_diff(FeatureSequence(tape.constant(Tensor({5, 2, 3, 3})))).size() == 4);
  CHECK_THROWS_AS(template_diff(FeatureSequence(tape.constant(scalar_frames({1})))),
                  SequenceTooShortError);
}

TEST_CASE("multi-difference template examples") {
  Tape tape;
  auto t = template_multi_diff(FeatureSequence(tape.constant(scalar_frames({1, 3, 2, 5}))));
  CHECK(values_of(t) == std::vector<double>{3, 4});
  CHECK(t.center_offset == 1);
  auto c = template_multi_diff(FeatureSequence(tape.constant(Tensor({6, 2, 2, 2}, 0.7))));
  CHECK(c.size() == 4);
  for (double v : values_of(c)) CHECK(v == 0.0);
  CHECK(template_multi_diff(FeatureSequence(tape.constant(Tensor({30, 1, 2, 2})))).size() == 28);
  CHECK_THROWS_AS(template_multi_diff(FeatureSequence(tape.constant(scalar_frames({1, 2})))),
                  SequenceTooShortError);
}

TEST_CASE("static-exclusion template examples") {
  Tape tape;
  auto med = template_static_excl(FeatureSequence(tape.constant(scalar_frames({1, 2, 9}))),
                                  Reduction::median);
  CHECK(values_of(med) == std::vector<double>{1, 0, 7});
  auto mean = template_static_excl(FeatureSequence(tape.constant(scalar_frames({0, 4}))),
                                   Reduction::mean);
  CHECK(values_of(mean) == std::vector<double>{2, 2});
  auto c = template_static_excl(FeatureSequence(tape.constant(Tensor({5, 3, 2, 2}, -1.5))),
                                Reduction::median);
  CHECK(c.size() == 5);
  for (double v : values_of(c)) CHECK(v == 0.0);
  // 0.1 * 7 / 7 != 0.1 in floating point; the mean filter must still cancel.
  auto cm = template_static_excl(FeatureSequence(tape.constant(Tensor({7, 1, 1, 3}, 0.1))),
                                 Reduction::mean);
  for (double v : values_of(cm)) CHECK(v == 0.0);
  CHECK_THROWS_AS(template_static_excl(FeatureSequence(tape.constant(scalar_frames({1, 2}))),
                                       Reduction::max),
                  ConfigError);
}

TEST_CASE("templates match an element-wise oracle") {
  for (auto kind : {TemplateKind::diff, TemplateKind::multi_diff, TemplateKind::static_excl})
    for (auto filter : {Reduction::mean, Reduction::median})
      for (std::size_t n : {3u, 4u, 9u}) {
        Tape tape;
        const Tensor x = random_tensor({n, 2, 3, 2}, 10 * n + 1);
        const auto t = make(kind, FeatureSequence(tape.constant(x)), filter);
        CHECK(max_abs_diff(t.maps.value(), oracle(kind, x, filter)) <= 1e-15);
      }
}

TEST_CASE("length contracts and non-negativity over n in [3, 100]") {
  for (std::size_t n = 3; n <= 100; ++n) {
    Tape tape;
    FeatureSequence f(tape.constant(random_tensor({n, 1, 2, 2}, n)));
    const auto d = template_diff(f);
    const auto md = template_multi_diff(f);
    const auto se = template_static_excl(f, Reduction::median);
    REQUIRE(d.size() == n - 1);
    REQUIRE(md.size() == n - 2);
    REQUIRE(se.size() == n);
    for (const auto* t : {&d, &md, &se}) {
      CHECK(t->size() == template_length(t->kind, n));
      for (double v : t->maps.value().values()) REQUIRE(v >= 0.0);
    }
  }
}

TEST_CASE("difference template is order sensitive where a frame max is not") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6;
    const Tensor x = random_tensor({n, 2, 3, 3}, 100 + trial);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (std::is_sorted(perm.begin(), perm.end())) std::swap(perm[0], perm[1]);
    const std::size_t fs = x.size() / n;
    Tensor y(x.shape());
    for (std::size_t t = 0; t < n; ++t)
      std::copy_n(x.data() + perm[t] * fs, fs, y.data() + t * fs);

    Tape tape;
    Var xv = tape.constant(x), yv = tape.constant(y);
    CHECK(reduce(xv, 0, Reduction::max).value() == reduce(yv, 0, Reduction::max).value());
    CHECK(max_abs_diff(template_diff(FeatureSequence(xv)).maps.value(),
                       template_diff(FeatureSequence(yv)).maps.value()) > 1e-3);
  }
}

TEST_CASE("median static exclusion isolates a single outlier frame") {
  for (std::size_t n : {3u, 5u, 11u, 21u})
    for (std::size_t outlier = 0; outlier < n; outlier += 2) {
      const Tensor base = random_tensor({1, 2, 3, 3}, n);
      const Tensor spike = random_tensor({1, 2, 3, 3}, n + 99, 2.0, 3.0);
      const std::size_t fs = base.size();
      Tensor x({n, 2, 3, 3});
      for (std::size_t t = 0; t < n; ++t)
        std::copy_n((t == outlier ? spike : base).data(), fs, x.data() + t * fs);
      Tape tape;
      const auto t = template_static_excl(FeatureSequence(tape.constant(x)), Reduction::median);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t e = 0; e < fs; ++e) {
          const double v = t.maps.value()[k * fs + e];
          if (k == outlier)
            CHECK(v > 0.0);
          else
            CHECK(v == 0.0);
        }
    }
}

TEST_CASE("template gradients") {
  const Tensor x = kink_free({4, 2, 2, 2}, 3);
  // Spread frames apart so no |a - b| or |a - static| crosses zero under the
  // finite-difference step.
  Tensor spread = x;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t e = 0; e < 8; ++e) spread[t * 8 + e] += 3.0 * static_cast<double>(t);
  for (auto kind : {TemplateKind::diff, TemplateKind::multi_diff, TemplateKind::static_excl}) {
    const double err = grad_check(
        [&](Var v) { return make(kind, FeatureSequence(v), Reduction::mean).maps; }, spread,
        1e-5, 1e-6);
    CHECK(err <= 1e-6);
  }
}
