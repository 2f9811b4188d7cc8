#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "helpers.hpp"
#include "scn/eval.hpp"

using namespace scn;
using namespace scn::test;

namespace {

LabeledFeature row(int subject, int view, std::vector<double> f, std::string set = "NM") {
  LabeledFeature r;
  r.subject = subject;
  r.condition = "nm";
  r.view = view;
  r.probe_set = std::move(set);
  r.feature = Tensor({f.size()}, f);
  return r;
}

FeatureTable random_table(int subjects, const std::vector<int>& views, int per_cell,
                          std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureTable t;
  for (int s = 1; s <= subjects; ++s)
    for (int v : views)
      for (int q = 0; q < per_cell; ++q) {
        std::vector<double> f(dim);
        for (auto& x : f) x = n(rng);
        t.rows.push_back(row(s, v, f));
      }
  return t;
}

// Brute-force oracle for one cell, written independently of rank1().
double oracle_cell(const FeatureTable& g, const FeatureTable& p, int pv, int gv) {
  int hits = 0, total = 0;
  for (const auto& q : p.rows) {
    if (q.view != pv) continue;
    std::map<int, double> per_subject;
    for (const auto& r : g.rows) {
      if (r.view != gv) continue;
      double d = 0.0;
      for (std::size_t i = 0; i < r.feature.size(); ++i)
        d += (r.feature[i] - q.feature[i]) * (r.feature[i] - q.feature[i]);
      auto it = per_subject.find(r.subject);
      if (it == per_subject.end() || d < it->second) per_subject[r.subject] = d;
    }
    // std::map iterates subjects in ascending order, so strict < keeps the smallest on ties.
    int best = -1;
    double bd = 0.0;
    for (auto [s, d] : per_subject)
      if (best < 0 || d < bd) best = s, bd = d;
    hits += best == q.subject;
    ++total;
  }
  return 100.0 * hits / total;
}

}  // namespace

TEST_CASE("gallery equal to probe gives 100 in every cell") {
  // One feature per subject, shared by its sequences at every view.
  const FeatureTable base = random_table(10, {0}, 1, 8, 1);
  FeatureTable t;
  for (int v : {0, 90, 180})
    for (auto r : base.rows) {
      r.view = v;
      t.rows.push_back(r);
    }
  const EvalReport r = rank1(t, t, false);
  REQUIRE(r.conditions.size() == 1);
  for (const auto& line : r.conditions[0].rank1)
    for (const auto& cell : line) {
      REQUIRE(cell);
      if (cell) CHECK(*cell == 100.0);
    }
  CHECK(r.conditions[0].mean == 100.0);
}

TEST_CASE("hand-checked cells, ties and identical-view exclusion") {
  FeatureTable g, p;
  g.rows = {row(1, 0, {0, 0}), row(2, 0, {2, 0}), row(1, 90, {0, 5}), row(2, 90, {0, -5})};
  // Equidistant between subjects 1 and 2 at view 0: the tie goes to subject 1.
  p.rows = {row(2, 0, {1, 0}), row(2, 90, {0, -4})};
  const EvalReport r = rank1(g, p);
  const auto& c = r.conditions[0];
  REQUIRE(c.views == std::vector<int>{0, 90});
  CHECK(*c.rank1[0][0] == 0.0);
  CHECK(*c.rank1[1][1] == 100.0);
  // (1,0) is equidistant from (0,5) and (0,-5): subject 1 again.
  CHECK(*c.rank1[0][1] == 0.0);
  // Probe (0,-4) vs gallery 0: nearest (0,0) -> subject 1.
  CHECK(*c.rank1[1][0] == 0.0);
  // Same-view cells excluded: means come from the off-diagonal only.
  CHECK(*c.view_mean[0] == 0.0);
  CHECK(*c.view_mean[1] == 0.0);
  CHECK(c.mean == 0.0);
  const EvalReport all = rank1(g, p, false);
  CHECK(all.conditions[0].mean == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("rank1 matches a brute-force oracle with several gallery sequences per subject") {
  const std::vector<int> views{0, 30, 60};
  const FeatureTable g = random_table(12, views, 3, 4, 2);
  FeatureTable p = random_table(12, views, 2, 4, 3);
  // Pull probes towards their own subject's first gallery sequence so cells vary.
  for (auto& q : p.rows)
    for (const auto& r : g.rows)
      if (r.subject == q.subject && r.view == q.view) {
        for (std::size_t i = 0; i < 4; ++i) q.feature[i] = 0.4 * q.feature[i] + r.feature[i];
        break;
      }
  const EvalReport r = rank1(g, p);
  const auto& c = r.conditions[0];
  double total = 0.0;
  int cells = 0;
  for (std::size_t a = 0; a < views.size(); ++a)
    for (std::size_t b = 0; b < views.size(); ++b) {
      const double want = oracle_cell(g, p, views[a], views[b]);
      CHECK(*c.rank1[a][b] == doctest::Approx(want).epsilon(1e-12));
      if (a != b) total += want, ++cells;
    }
  // The overall mean recomputed from the cells.
  CHECK(std::fabs(c.mean - total / cells) <= 1e-12);
}

TEST_CASE("random features score near chance") {
  // 50 subjects: chance is 2%.
  const std::vector<int> views{0, 90};
  double sum = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const FeatureTable g = random_table(50, views, 1, 16, 100 + t);
    const FeatureTable p = random_table(50, views, 4, 16, 200 + t);
    sum += rank1(g, p).conditions[0].mean;
  }
  CHECK(std::fabs(sum / trials - 2.0) <= 1.0);
}

TEST_CASE("invariance to monotone distance changes and to relabelling") {
  const std::vector<int> views{0, 45, 90};
  const FeatureTable g = random_table(8, views, 2, 6, 5);
  FeatureTable p = random_table(8, views, 2, 6, 6);
  for (std::size_t i = 0; i < p.rows.size(); ++i)
    for (std::size_t k = 0; k < 6; ++k) p.rows[i].feature[k] += g.rows[i].feature[k];
  const EvalReport base = rank1(g, p);

  // Scaling every feature scales every distance: the ranking is unchanged.
  FeatureTable g2 = g, p2 = p;
  for (auto* t : {&g2, &p2})
    for (auto& r : t->rows)
      for (auto& v : r.feature.values()) v *= 3.5;
  CHECK(rank1(g2, p2).conditions[0].mean == base.conditions[0].mean);

  // Subject ids permuted consistently in both tables.
  FeatureTable g3 = g, p3 = p;
  auto relabel = [](int s) { return 100 - 7 * s; };
  for (auto* t : {&g3, &p3})
    for (auto& r : t->rows) r.subject = relabel(r.subject);
  CHECK(rank1(g3, p3).conditions[0].mean == base.conditions[0].mean);
}

TEST_CASE("absent cells and empty probe tables") {
  FeatureTable g, p;
  g.rows = {row(1, 0, {0.0}), row(2, 0, {1.0})};
  p.rows = {row(1, 0, {0.1}), row(1, 90, {0.1})};
  const EvalReport r = rank1(g, p);
  CHECK(r.any_absent);
  CHECK_FALSE(r.warnings.empty());
  const auto& c = r.conditions[0];
  CHECK_FALSE(c.rank1[0][1].has_value());
  CHECK_FALSE(c.rank1[1][1].has_value());
  CHECK(*c.rank1[1][0] == 100.0);

  const EvalReport none = rank1(g, FeatureTable{});
  CHECK(none.conditions.empty());
  CHECK_FALSE(none.any_absent);
}

TEST_CASE("probe sets report separately") {
  FeatureTable g, p;
  g.rows = {row(1, 0, {0.0}), row(2, 0, {1.0})};
  p.rows = {row(1, 0, {0.1}, "NM"), row(1, 0, {0.9}, "BG"), row(2, 0, {0.8}, "CL")};
  const EvalReport r = rank1(g, p, false);
  REQUIRE(r.conditions.size() == 3);
  CHECK(r.find("NM")->mean == 100.0);
  CHECK(r.find("BG")->mean == 0.0);
  CHECK(r.find("CL")->mean == 100.0);
  CHECK(r.find("XX") == nullptr);

  const auto dir = fs::temp_directory_path() / "scn_test_eval_report";
  fs::remove_all(dir);
  write_report(dir, r);
  for (const char* f : {"rank1_NM.csv", "rank1_BG.txt", "summary.csv", "summary.txt"})
    CHECK(fs::exists(dir / f));
  std::ifstream in(dir / "summary.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "condition,mean,probes");
  fs::remove_all(dir);
}

TEST_CASE("ablation and sweep tables") {
  ModelConfig base;
  const auto rows = ablation_rows(base);
  int bie = 0, mfa = 0;
  for (const auto& r : rows) (r.group == "bie" ? bie : mfa) += 1;
  CHECK(bie == 10);
  CHECK(mfa == 6);
  const std::vector<std::string> labels{
      "baseline (no BIE)", "T1 micro",    "T2 micro",    "T3 micro",
      "T1 global",         "T2 global",   "T3 global",   "T1 adaptive",
      "T2 adaptive",       "T3 adaptive", "mean",        "max",
      "mean + MFA",        "max + MFA",   "mean + BIE + MFA", "max + BIE + MFA"};
  REQUIRE(rows.size() == labels.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].label == labels[i]);
  CHECK(rows[0].config.bie_template == TemplateChoice::none);
  // The extractor grid shares the first aggregator row's plain network.
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK_FALSE(rows[i].config.mfa_enabled);
    CHECK(rows[i].config.mfa_final == Reduction::mean);
  }
  CHECK(rows[3].config.bie_template == TemplateChoice::static_excl_median);
  CHECK(rows[3].config.bie_fusion == FusionMode::micro);
  CHECK(rows[11].config.mfa_final == Reduction::max);
  CHECK(rows[13].config.mfa_enabled);
  CHECK(rows[13].config.mfa_within == Reduction::max);
  CHECK(rows[13].config.bie_template == TemplateChoice::none);
  CHECK(rows[14].config.bie_template == TemplateChoice::static_excl_median);
  CHECK(rows[14].config.bie_fusion == FusionMode::adaptive);

  // A failing configuration is recorded, not fatal.
  auto copy = rows;
  run_ablation(copy, [](const ModelConfig& c) -> std::map<std::string, double> {
    if (c.bie_fusion == FusionMode::global && c.bie_template == TemplateChoice::diff)
      throw Error("diverged");
    return {{"NM", c.mfa_enabled ? 90.0 : 80.0}};
  });
  int errors = 0;
  for (const auto& r : copy) errors += !r.error.empty();
  CHECK(errors == 1);
  const std::string table = format_ablation(copy, {"NM"});
  CHECK(table.find("diverged") != std::string::npos);

  const auto pts = window_sweep(base, {3, 5, 7}, [](const ModelConfig& c) {
    return std::map<std::string, double>{{"NM", 50.0 + static_cast<double>(c.mfa_window)}};
  });
  REQUIRE(pts.size() == 3);
  CHECK(pts[2].results.at("NM") == 57.0);
  const auto dir = fs::temp_directory_path() / "scn_test_eval_sweep";
  fs::remove_all(dir);
  write_sweep(dir, pts, {"NM"});
  CHECK(fs::exists(dir / "window_sweep.csv"));
  fs::remove_all(dir);
}
