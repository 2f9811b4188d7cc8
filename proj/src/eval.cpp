#include "scn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "scn/train.hpp"

namespace scn {

FeatureTable extract_features(ScnParams& params, const std::vector<FrameSequence>& seqs,
                              const std::vector<std::string>& probe_sets, std::size_t threads) {
  FeatureTable table;
  const std::size_t need = params.config.min_frames();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].size() >= need) {
      usable.push_back(i);
    } else {
      std::ostringstream s;
      s << "subject " << seqs[i].subject << ' ' << seqs[i].condition << '-' << seqs[i].run
        << " view " << seqs[i].view << ": " << seqs[i].size() << " frames < " << need;
      table.skipped.push_back(s.str());
    }
  }
  table.rows.resize(usable.size());
  parallel_for(usable.size(), threads, [&](std::size_t r) {
    const FrameSequence& s = seqs[usable[r]];
    Tape tape;
    tape.set_track_params(false);
    Tensor f = scn_forward(params, tape.constant(to_tensor(s))).value();
    LabeledFeature& row = table.rows[r];
    row.subject = s.subject;
    row.condition = s.condition;
    row.run = s.run;
    row.view = s.view;
    row.probe_set = probe_sets.empty() ? s.condition : probe_sets[usable[r]];
    row.feature = f.reshaped({f.size()});
  });
  return table;
}

const ConditionReport* EvalReport::find(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

double distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string fmt(double v, int prec = 1) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace

EvalReport rank1(const FeatureTable& gallery, const FeatureTable& probe,
                 bool exclude_identical_view) {
  EvalReport report;
  report.skipped = gallery.skipped;
  report.skipped.insert(report.skipped.end(), probe.skipped.begin(), probe.skipped.end());
  std::set<int> view_set;
  for (const auto& r : gallery.rows) view_set.insert(r.view);
  for (const auto& r : probe.rows) view_set.insert(r.view);
  const std::vector<int> views(view_set.begin(), view_set.end());
  std::vector<std::string> names;
  for (const auto& r : probe.rows)
    if (std::find(names.begin(), names.end(), r.probe_set) == names.end())
      names.push_back(r.probe_set);

  for (const auto& name : names) {
    ConditionReport c;
    c.name = name;
    c.views = views;
    const std::size_t nv = views.size();
    c.rank1.assign(nv, std::vector<std::optional<double>>(nv));
    c.view_mean.assign(nv, std::nullopt);
    double total = 0.0;
    std::size_t cells = 0;
    for (std::size_t pv = 0; pv < nv; ++pv) {
      std::vector<const LabeledFeature*> probes;
      for (const auto& r : probe.rows)
        if (r.probe_set == name && r.view == views[pv]) probes.push_back(&r);
      c.probes += probes.size();
      double row_total = 0.0;
      std::size_t row_cells = 0;
      for (std::size_t gv = 0; gv < nv; ++gv) {
        std::vector<const LabeledFeature*> gal;
        for (const auto& r : gallery.rows)
          if (r.view == views[gv]) gal.push_back(&r);
        if (probes.empty()) continue;
        if (gal.empty()) {
          report.any_absent = true;
          report.warnings.push_back(name + ": no gallery sequences at view " +
                                    std::to_string(views[gv]) + "; cell absent");
          continue;
        }
        std::size_t hits = 0;
        for (const auto* p : probes) {
          int best_subject = std::numeric_limits<int>::max();
          double best = std::numeric_limits<double>::infinity();
          for (const auto* g : gal) {
            const double d = distance(p->feature, g->feature);
            if (d < best || (d == best && g->subject < best_subject)) {
              best = d;
              best_subject = g->subject;
            }
          }
          hits += best_subject == p->subject;
        }
        const double acc = 100.0 * static_cast<double>(hits) / static_cast<double>(probes.size());
        c.rank1[pv][gv] = acc;
        if (exclude_identical_view && pv == gv) continue;
        row_total += acc;
        ++row_cells;
        total += acc;
        ++cells;
      }
      if (row_cells) c.view_mean[pv] = row_total / static_cast<double>(row_cells);
    }
    c.mean = cells ? total / static_cast<double>(cells) : 0.0;
    report.conditions.push_back(std::move(c));
  }
  return report;
}

std::string format_condition(const ConditionReport& c) {
  std::ostringstream out;
  out << c.name << " (rank-1 %, rows: probe view, columns: gallery view)\n";
  out << std::setw(8) << "probe";
  for (int v : c.views) out << std::setw(8) << (std::to_string(v) + "°");
  out << std::setw(8) << "mean" << '\n';
  for (std::size_t p = 0; p < c.views.size(); ++p) {
    out << std::setw(8) << (std::to_string(c.views[p]) + "°");
    for (const auto& cell : c.rank1[p]) out << std::setw(8) << (cell ? fmt(*cell) : "-");
    out << std::setw(8) << (c.view_mean[p] ? fmt(*c.view_mean[p]) : "-") << '\n';
  }
  out << "overall mean " << fmt(c.mean, 2) << " over " << c.probes << " probe sequences\n";
  return out.str();
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.conditions) {
    std::ofstream csv(dir / ("rank1_" + c.name + ".csv"));
    csv << "probe_view";
    for (int v : c.views) csv << ',' << v;
    csv << ",mean\n";
    for (std::size_t p = 0; p < c.views.size(); ++p) {
      csv << c.views[p];
      for (const auto& cell : c.rank1[p]) csv << ',' << (cell ? fmt(*cell, 4) : "");
      csv << ',' << (c.view_mean[p] ? fmt(*c.view_mean[p], 4) : "") << '\n';
    }
    std::ofstream(dir / ("rank1_" + c.name + ".txt")) << format_condition(c);
  }
  std::ofstream csv(dir / "summary.csv");
  std::ofstream txt(dir / "summary.txt");
  csv << "condition,mean,probes\n";
  for (const auto& c : report.conditions) {
    csv << c.name << ',' << fmt(c.mean, 4) << ',' << c.probes << '\n';
    txt << std::left << std::setw(6) << c.name << std::right << std::setw(8) << fmt(c.mean, 2)
        << "  (" << c.probes << " probes)\n";
  }
  for (const auto& w : report.warnings) txt << "warning: " << w << '\n';
  for (const auto& s : report.skipped) txt << "skipped: " << s << '\n';
}

std::vector<AblationRow> ablation_rows(const ModelConfig& base) {
  std::vector<AblationRow> rows;
  const TemplateChoice t3 = base.bie_template == TemplateChoice::static_excl_mean
                                ? TemplateChoice::static_excl_mean
                                : TemplateChoice::static_excl_median;
  // The extractor grid runs on the plain network: no aggregator, mean
  // pooling, the same setting as the first aggregator row.
  ModelConfig plain = base;
  plain.bie_template = TemplateChoice::none;
  plain.mfa_enabled = false;
  plain.mfa_final = Reduction::mean;
  rows.push_back({"bie", "baseline (no BIE)", plain, {}, {}});
  const std::pair<TemplateChoice, const char*> templates[] = {
      {TemplateChoice::diff, "T1"}, {TemplateChoice::multi_diff, "T2"}, {t3, "T3"}};
  for (auto f : {FusionMode::micro, FusionMode::global, FusionMode::adaptive})
    for (const auto& [t, tname] : templates) {
      ModelConfig c = plain;
      c.bie_template = t;
      c.bie_fusion = f;
      rows.push_back({"bie", std::string(tname) + " " + to_string(f), c, {}, {}});
    }
  // Aggregator rows: one statistical function for the window and the
  // sequence reduction, then the aggregator, then T3 adaptive extractors.
  struct Step {
    bool bie, mfa;
    const char* suffix;
  };
  for (const Step& st : {Step{false, false, ""}, Step{false, true, " + MFA"},
                         Step{true, true, " + BIE + MFA"}})
    for (auto fn : {Reduction::mean, Reduction::max}) {
      ModelConfig c = base;
      c.bie_template = st.bie ? t3 : TemplateChoice::none;
      c.bie_fusion = FusionMode::adaptive;
      c.mfa_enabled = st.mfa;
      c.mfa_within = c.mfa_final = fn;
      rows.push_back({"mfa", to_string(fn) + st.suffix, c, {}, {}});
    }
  return rows;
}

void run_ablation(std::vector<AblationRow>& rows, const RunFn& run,
                  const std::function<void(const AblationRow&)>& on_row) {
  for (auto& row : rows) {
    try {
      row.results = run(row.config);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (on_row) on_row(row);
  }
}

std::string format_ablation(const std::vector<AblationRow>& rows,
                            const std::vector<std::string>& columns) {
  std::ostringstream out;
  std::string group;
  for (const auto& r : rows) {
    if (r.group != group) {
      group = r.group;
      out << (group == "bie" ? "Extractor ablation" : "Aggregator ablation") << '\n';
      out << std::left << std::setw(32) << "setting" << std::right;
      for (const auto& c : columns) out << std::setw(8) << c;
      out << '\n';
    }
    out << std::left << std::setw(32) << r.label << std::right;
    for (const auto& c : columns) {
      const auto it = r.results.find(c);
      out << std::setw(8) << (it == r.results.end() ? "-" : fmt(it->second));
    }
    if (!r.error.empty()) out << "  failed: " << r.error;
    out << '\n';
  }
  return out.str();
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                        const std::vector<std::string>& columns) {
  std::ofstream csv(path);
  csv << "group,setting";
  for (const auto& c : columns) csv << ',' << c;
  csv << ",error\n";
  for (const auto& r : rows) {
    csv << r.group << ",\"" << r.label << '"';
    for (const auto& c : columns) {
      const auto it = r.results.find(c);
      csv << ',' << (it == r.results.end() ? "" : fmt(it->second, 4));
    }
    csv << ",\"" << r.error << "\"\n";
  }
}

std::vector<SweepPoint> window_sweep(const ModelConfig& base, const std::vector<std::size_t>& windows,
                                     const RunFn& run) {
  std::vector<SweepPoint> out;
  for (std::size_t w : windows) {
    SweepPoint p;
    p.window = w;
    ModelConfig c = base;
    c.mfa_enabled = true;
    c.mfa_window = w;
    try {
      p.results = run(c);
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_sweep(const std::filesystem::path& dir, const std::vector<SweepPoint>& points,
                 const std::vector<std::string>& columns) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "window_sweep.csv");
  csv << "L";
  for (const auto& c : columns) csv << ',' << c;
  csv << ",error\n";
  std::ostringstream txt;
  txt << std::setw(4) << "L";
  for (const auto& c : columns) txt << std::setw(8) << c;
  txt << '\n';
  for (const auto& p : points) {
    csv << p.window;
    txt << std::setw(4) << p.window;
    for (const auto& c : columns) {
      const auto it = p.results.find(c);
      csv << ',' << (it == p.results.end() ? "" : fmt(it->second, 4));
      txt << std::setw(8) << (it == p.results.end() ? "-" : fmt(it->second));
    }
    csv << ",\"" << p.error << "\"\n";
    if (!p.error.empty()) txt << "  failed: " << p.error;
    txt << '\n';
  }
  for (const auto& c : columns) {
    const SweepPoint* best = nullptr;
    for (const auto& p : points) {
      const auto it = p.results.find(c);
      if (it != p.results.end() && (!best || it->second > best->results.at(c))) best = &p;
    }
    if (!best) continue;
    txt << c << ": best L = " << best->window << " (" << fmt(best->results.at(c)) << ")";
    for (const auto& p : points)
      if (p.window == 7 && p.results.count(c))
        txt << "; L = 7 is " << fmt(best->results.at(c) - p.results.at(c)) << " points below it";
    txt << '\n';
  }
  std::ofstream(dir / "window_sweep.txt") << txt.str();
}

}  // namespace scn
