#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scn/config.hpp"
#include "scn/eval.hpp"
#include "scn/train.hpp"

namespace scn {

struct SplitData {
  std::vector<FrameSequence> train, gallery, probe;
  std::vector<std::string> probe_sets;  // parallel to probe
};

// Index of data.root under data.layout and data.protocol.
DatasetIndex load_index(const RunConfig& cfg);
SplitData load_splits(const DatasetIndex& index, bool with_train = true, bool with_test = true);

// Gallery and probe features, then the rank-1 report. With gallery_is_probe
// the gallery table is also used as the probe table (a sanity run).
EvalReport evaluate(ScnParams& params, const SplitData& data, bool exclude_identical_view = true,
                    std::size_t threads = 1, bool gallery_is_probe = false);

// Trains a fresh model of the given configuration on data.train and
// returns each probe condition's overall mean on the test split.
RunFn make_run_fn(const SplitData& data, const TrainConfig& train, std::uint64_t seed,
                  std::function<void(const std::string&)> log = {});

}  // namespace scn
