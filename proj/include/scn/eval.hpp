#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scn/data.hpp"
#include "scn/network.hpp"

namespace scn {

struct LabeledFeature {
  int subject = 0;
  std::string condition;
  int run = 0;
  int view = 0;
  std::string probe_set;  // condition column the row reports under
  Tensor feature;         // flattened for comparison
};

struct FeatureTable {
  std::vector<LabeledFeature> rows;
  std::vector<std::string> skipped;  // sequences below the model minimum
};

// One descriptor per full sequence; `probe_sets` (parallel to seqs, may be
// empty) labels each row.
FeatureTable extract_features(ScnParams& params, const std::vector<FrameSequence>& seqs,
                              const std::vector<std::string>& probe_sets = {},
                              std::size_t threads = 1);

struct ConditionReport {
  std::string name;
  std::vector<int> views;
  // rank1[probe_view][gallery_view] in percent; nullopt when absent.
  std::vector<std::vector<std::optional<double>>> rank1;
  std::vector<std::optional<double>> view_mean;  // per probe view
  double mean = 0.0;                             // over included cells
  std::size_t probes = 0;
};

struct EvalReport {
  std::vector<ConditionReport> conditions;
  std::vector<std::string> warnings;
  std::vector<std::string> skipped;
  bool any_absent = false;

  const ConditionReport* find(const std::string& name) const;
};

// Nearest-neighbour identification per (probe view, gallery view) cell.
// Distances are Euclidean; a subject's distance is the minimum over its
// gallery sequences in the cell; ties go to the smallest subject id. Cells
// with probe view == gallery view are left out of the means when
// exclude_identical_view is set.
EvalReport rank1(const FeatureTable& gallery, const FeatureTable& probe,
                 bool exclude_identical_view = true);

// rank1_<name>.csv and rank1_<name>.txt per condition, plus summary.csv and
// summary.txt.
void write_report(const std::filesystem::path& dir, const EvalReport& report);
std::string format_condition(const ConditionReport& c);

// Overall accuracy per condition for one trained configuration.
using RunFn = std::function<std::map<std::string, double>(const ModelConfig&)>;

struct AblationRow {
  std::string group;  // "bie" or "mfa"
  std::string label;
  ModelConfig config;
  std::map<std::string, double> results;
  std::string error;
};

// Extractor table: the plain network, then templates T1..T3 under micro,
// global and adaptive fusion (fusion-major, as the rows are usually laid
// out). Aggregator table: {mean, max} pooling alone, with the aggregator,
// and with the aggregator plus T3 adaptive extractors.
std::vector<AblationRow> ablation_rows(const ModelConfig& base);
void run_ablation(std::vector<AblationRow>& rows, const RunFn& run,
                  const std::function<void(const AblationRow&)>& on_row = {});
std::string format_ablation(const std::vector<AblationRow>& rows,
                            const std::vector<std::string>& columns);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows,
                        const std::vector<std::string>& columns);

struct SweepPoint {
  std::size_t window = 0;
  std::map<std::string, double> results;
  std::string error;
};

std::vector<SweepPoint> window_sweep(const ModelConfig& base, const std::vector<std::size_t>& windows,
                                     const RunFn& run);
// CSV plus a plain-text table with the best window and its margin over the
// others, reported rather than asserted.
void write_sweep(const std::filesystem::path& dir, const std::vector<SweepPoint>& points,
                 const std::vector<std::string>& columns);

}  // namespace scn
