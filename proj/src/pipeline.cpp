#include "scn/pipeline.hpp"

#include <sstream>

namespace scn {

DatasetIndex load_index(const RunConfig& cfg) {
  const fs::path root = cfg.get("data.root");
  if (!fs::is_directory(root))
    throw ConfigError("data.root " + root.string() + " does not exist (run `scn synth` first?)");
  return cfg.get("data.layout") == "ou-mvlp" ? load_ou_mvlp_layout(root, cfg.protocol())
                                              : load_casia_layout(root, cfg.protocol());
}

SplitData load_splits(const DatasetIndex& index, bool with_train, bool with_test) {
  SplitData d;
  for (const auto& r : index.records) {
    if (r.split == Split::train && with_train) {
      d.train.push_back(load_sequence(r));
    } else if (r.split == Split::gallery && with_test) {
      d.gallery.push_back(load_sequence(r));
    } else if (r.split == Split::probe && with_test) {
      d.probe.push_back(load_sequence(r));
      d.probe_sets.push_back(r.probe_set);
    }
  }
  return d;
}

EvalReport evaluate(ScnParams& params, const SplitData& data, bool exclude_identical_view,
                    std::size_t threads, bool gallery_is_probe) {
  const FeatureTable gallery = extract_features(params, data.gallery, {}, threads);
  if (gallery_is_probe) return rank1(gallery, gallery, exclude_identical_view);
  const FeatureTable probe = extract_features(params, data.probe, data.probe_sets, threads);
  return rank1(gallery, probe, exclude_identical_view);
}

RunFn make_run_fn(const SplitData& data, const TrainConfig& train, std::uint64_t seed,
                  std::function<void(const std::string&)> log) {
  return [&data, train, seed, log](const ModelConfig& model) {
    ScnParams params = init_params(model, seed);
    AdamState state;
    TrainConfig cfg = train;
    cfg.out_dir.clear();
    const TrainResult r = scn::train(params, state, data.train, cfg);
    const EvalReport rep = evaluate(params, data, true, cfg.threads);
    std::map<std::string, double> out;
    for (const auto& c : rep.conditions) out[c.name] = c.mean;
    if (log) {
      std::ostringstream s;
      s << r.steps << " steps, final loss " << r.last.loss;
      for (const auto& [k, v] : out) s << ", " << k << " " << v;
      log(s.str());
    }
    return out;
  };
}

}  // namespace scn
