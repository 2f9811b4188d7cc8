#include <map>
#include <numeric>

#include "helpers.hpp"
#include "scn/loss.hpp"

using namespace scn;
using namespace scn::test;

namespace {

std::vector<Var> record_all(Tape& tape, const std::vector<Tensor>& f, bool variables = false) {
  std::vector<Var> v;
  for (const auto& t : f) v.push_back(variables ? tape.variable(t) : tape.constant(t));
  return v;
}

// Independent evaluation of the batch-all loss.
double oracle(const std::vector<Tensor>& f, const std::vector<int>& labels,
              const TripletConfig& cfg, double* frac = nullptr) {
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t e = 0; e < f[i].size(); ++e) s += std::pow(f[i][e] - f[j][e], 2);
    return std::sqrt(s);
  };
  double sum = 0.0;
  std::size_t all = 0, active = 0;
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t p = 0; p < f.size(); ++p)
      for (std::size_t n = 0; n < f.size(); ++n) {
        if (a == p || labels[a] != labels[p] || labels[a] == labels[n]) continue;
        ++all;
        const double h = cfg.sign == TripletSign::standard
                             ? cfg.margin + dist(a, p) - dist(a, n)
                             : cfg.margin - dist(a, p) + dist(a, n);
        if (h > 0) {
          sum += h;
          ++active;
        }
      }
  if (frac) *frac = static_cast<double>(active) / static_cast<double>(all);
  if (cfg.normalization == TripletNorm::paper_2M) return sum / (2.0 * cfg.margin * all);
  return active ? sum / static_cast<double>(active) : 0.0;
}

std::vector<Tensor> random_features(std::size_t b, std::uint64_t seed, double spread = 1.0) {
  std::vector<Tensor> f;
  for (std::size_t i = 0; i < b; ++i) f.push_back(random_tensor({2, 2, 1}, seed + i, -spread, spread));
  return f;
}

std::vector<int> pk_labels(int p, int k) {
  std::vector<int> l;
  for (int s = 0; s < p; ++s)
    for (int j = 0; j < k; ++j) l.push_back(s + 1);
  return l;
}

}  // namespace

TEST_CASE("triplet hinge examples") {
  TripletConfig cfg;
  Tape tape;
  SUBCASE("satisfied: d_ap = 0, d_an = 1") {
    std::vector<Tensor> f{Tensor({1}, {0.0}), Tensor({1}, {0.0}), Tensor({1}, {1.0}),
                          Tensor({1}, {1.0})};
    auto r = triplet_loss_ba(record_all(tape, f), std::vector<int>{1, 1, 2, 2}, cfg);
    CHECK(r.loss.value()[0] == 0.0);
    CHECK(r.nonzero_fraction == 0.0);
  }
  SUBCASE("d_ap = d_an = 0.5: hinge 0.2, normalised 0.5") {
    // Regular tetrahedron with edge 0.5: every triplet sees equal distances.
    const double s = 0.5 / (2.0 * std::sqrt(2.0));
    std::vector<Tensor> f{Tensor({3}, {s, s, s}), Tensor({3}, {s, -s, -s}),
                          Tensor({3}, {-s, s, -s}), Tensor({3}, {-s, -s, s})};
    auto r = triplet_loss_ba(record_all(tape, f), std::vector<int>{1, 1, 2, 2}, cfg);
    CHECK(r.triplets == 8);
    CHECK(r.active == 8);
    CHECK(r.loss.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    cfg.normalization = TripletNorm::plain_mean;
    CHECK(triplet_loss_ba(record_all(tape, f), std::vector<int>{1, 1, 2, 2}, cfg)
              .loss.value()[0] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("p = 8, k = 6 gives 10,080 triplets") {
    auto f = random_features(48, 1);
    auto r = triplet_loss_ba(record_all(tape, f), pk_labels(8, 6), cfg);
    CHECK(r.triplets == 10'080);
  }
}

TEST_CASE("batch composition errors") {
  TripletConfig cfg;
  Tape tape;
  auto f = record_all(tape, random_features(4, 2));
  CHECK_THROWS_AS(triplet_loss_ba(f, std::vector<int>{1, 1, 1, 1}, cfg), BatchCompositionError);
  CHECK_THROWS_AS(triplet_loss_ba(f, std::vector<int>{1, 1, 1, 2}, cfg), BatchCompositionError);
  CHECK_THROWS_AS(triplet_loss_ba(f, std::vector<int>{1, 1, 2}, cfg), BatchCompositionError);
  cfg.margin = 0.0;
  CHECK_THROWS_AS(triplet_loss_ba(f, std::vector<int>{1, 1, 2, 2}, cfg), ConfigError);
}

TEST_CASE("loss matches a brute-force oracle in every configuration") {
  const auto labels = pk_labels(3, 3);
  for (auto norm : {TripletNorm::paper_2M, TripletNorm::plain_mean})
    for (auto sign : {TripletSign::standard, TripletSign::as_written})
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TripletConfig cfg{0.2, norm, sign};
        const auto f = random_features(9, 10 * seed, 0.3);
        Tape tape;
        double frac = 0.0;
        const double expect = oracle(f, labels, cfg, &frac);
        auto r = triplet_loss_ba(record_all(tape, f), labels, cfg);
        CHECK(r.loss.value()[0] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(r.nonzero_fraction == doctest::Approx(frac).epsilon(1e-15));
        CHECK(r.nonzero_fraction >= 0.0);
        CHECK(r.nonzero_fraction <= 1.0);
      }
}

TEST_CASE("loss properties") {
  TripletConfig cfg;
  const auto labels = pk_labels(3, 2);
  SUBCASE("relabelling invariance") {
    const auto f = random_features(6, 3);
    std::vector<int> renamed;
    const std::map<int, int> bijection{{1, 70}, {2, 5}, {3, 12}};
    for (int l : labels) renamed.push_back(bijection.at(l));
    Tape tape;
    CHECK(triplet_loss_ba(record_all(tape, f), labels, cfg).loss.value()[0] ==
          triplet_loss_ba(record_all(tape, f), renamed, cfg).loss.value()[0]);
  }
  SUBCASE("identical features: every triplet active") {
    std::vector<Tensor> f(6, Tensor({3}, 0.7));
    Tape tape;
    auto v = record_all(tape, f, true);
    auto r = triplet_loss_ba(v, labels, cfg);
    CHECK(r.nonzero_fraction == 1.0);
    tape.backward(r.loss);
    for (auto& x : v)
      for (double g : tape.grad(x)) CHECK(g == 0.0);
  }
  SUBCASE("zero exactly when every triplet clears the margin") {
    // Clusters far apart: zero. Shrink the gap below the margin: positive.
    std::vector<Tensor> f;
    for (int l : labels) f.push_back(Tensor({1}, {l * 1.0 + 0.01 * static_cast<double>(f.size() % 2)}));
    Tape tape;
    CHECK(triplet_loss_ba(record_all(tape, f), labels, cfg).loss.value()[0] == 0.0);
    for (auto& t : f) t[0] *= 0.1;
    CHECK(triplet_loss_ba(record_all(tape, f), labels, cfg).loss.value()[0] > 0.0);
  }
}

TEST_CASE("loss gradient matches finite differences") {
  const auto labels = pk_labels(3, 3);
  for (auto norm : {TripletNorm::paper_2M, TripletNorm::plain_mean})
    for (auto sign : {TripletSign::standard, TripletSign::as_written}) {
      TripletConfig cfg{0.2, norm, sign};
      const auto f = random_features(9, 40, 0.4);
      Tape tape;
      auto v = record_all(tape, f, true);
      auto r = triplet_loss_ba(v, labels, cfg);
      tape.backward(r.loss);
      const double h = 1e-6;
      double worst = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i)
        for (std::size_t e = 0; e < f[i].size(); ++e) {
          auto up = f, down = f;
          up[i][e] += h;
          down[i][e] -= h;
          const double num = (oracle(up, labels, cfg) - oracle(down, labels, cfg)) / (2 * h);
          const double ana = tape.grad(v[i])[e];
          worst = std::max(worst, std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-8}));
        }
      CHECK(worst <= 1e-5);
    }
}

TEST_CASE("learning-rate schedules") {
  CHECK(lr_schedule(0, "casia_b") == 1e-3);
  CHECK(lr_schedule(9'999, "casia_b") == 1e-3);
  CHECK(lr_schedule(10'000, "casia_b") == 1e-4);
  CHECK(lr_schedule(80'000, "casia_b") == 1e-5);
  CHECK(lr_schedule(49'999, "ou_mvlp") == 1e-3);
  CHECK(lr_schedule(50'000, "ou_mvlp") == 1e-4);
  CHECK(lr_schedule(200'000, "ou_mvlp") == 1e-5);
  const auto s = LrSchedule::parse("5e-4,100:1e-4");
  CHECK(s.at(99) == 5e-4);
  CHECK(s.at(100) == 1e-4);
  CHECK(LrSchedule::parse(s.str()).at(100) == 1e-4);
  CHECK_THROWS_AS(LrSchedule::parse("fast"), ConfigError);
  CHECK_THROWS_AS(LrSchedule::parse("1e-3,200:1e-4,100:1e-5"), ConfigError);
}

TEST_CASE("Adam updates") {
  SUBCASE("zero gradient leaves parameters and decays moments") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    std::vector<NamedParam> params{{"p", &p}};
    AdamState st;
    p.grad()[0] = 1.0;
    optimizer_step(params, st, 1e-3);
    const Tensor after_one = p;
    const double m0 = st.m[0][0];
    p.zero_grad();
    optimizer_step(params, st, 1e-3);
    // The bias-corrected first moment still pushes coordinate 0; others stay.
    CHECK(p[1] == after_one[1]);
    CHECK(p[2] == after_one[2]);
    CHECK(std::fabs(st.m[0][0]) < std::fabs(m0));
    CHECK(st.step == 2);
  }
  SUBCASE("first step is -lr * sign(g)") {
    for (double g : {1.0, -3.0, 1e-4}) {
      Tensor p({1}, {0.0});
      std::vector<NamedParam> params{{"p", &p}};
      AdamState st;
      p.grad()[0] = g;
      optimizer_step(params, st, 1e-3);
      // Closed form: m_hat = g, v_hat = g^2.
      CHECK(p[0] == doctest::Approx(-1e-3 * g / (std::fabs(g) + 1e-8)).epsilon(1e-12));
    }
  }
  SUBCASE("constant gradient settles at unit steps of lr") {
    Tensor p({1}, {0.0});
    std::vector<NamedParam> params{{"p", &p}};
    AdamState st;
    double prev = 0.0, last_step = 0.0;
    for (int i = 0; i < 1000; ++i) {
      p.grad()[0] = 0.37;
      optimizer_step(params, st, 1e-3);
      last_step = prev - p[0];
      prev = p[0];
    }
    CHECK(last_step == doctest::Approx(1e-3).epsilon(1e-6));
  }
  SUBCASE("non-finite gradient names the parameter") {
    Tensor a({2}), b({2});
    std::vector<NamedParam> params{{"stage1.a", &a}, {"stage2.b", &b}};
    b.grad()[1] = std::nan("");
    AdamState st;
    try {
      optimizer_step(params, st, 1e-3);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("stage2.b") != std::string::npos);
    }
    CHECK(a[0] == 0.0);
  }
}
