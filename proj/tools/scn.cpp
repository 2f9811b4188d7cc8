// scn: command-line entry point. Every subcommand resolves a RunConfig
// (defaults < --preset < --config file < overrides), echoes it into its
// output directory and exits 0 on success, 1 on numeric failure and 2 on
// configuration errors.

#include <cstdio>
#include <iostream>
#include <optional>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "scn/checks.hpp"
#include "scn/config.hpp"
#include "scn/dump.hpp"
#include "scn/pipeline.hpp"

namespace {

using namespace scn;

constexpr int kOk = 0, kNumeric = 1, kConfig = 2;

struct Options {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

// "key=value", "--key=value" or "--key value". Keys are resolved against the
// command's own section first, so `eval --checkpoint x` means
// eval.checkpoint.
void apply_overrides(RunConfig& cfg, const std::string& section,
                     const std::vector<std::string>& args) {
  auto resolve = [&](const std::string& key) {
    try {
      return cfg.resolve_key(section + "." + key);
    } catch (const ConfigError&) {
      return cfg.resolve_key(key);
    }
  };
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    const bool dashed = a.rfind("--", 0) == 0;
    if (dashed) a = a.substr(2);
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      cfg.set(resolve(a.substr(0, eq)), a.substr(eq + 1));
    } else if (dashed && i + 1 < args.size()) {
      cfg.set(resolve(a), args[++i]);
    } else if (dashed) {
      // A bare flag switches a boolean on.
      cfg.set(resolve(a), "true");
    } else {
      throw ConfigError("unexpected argument '" + args[i] + "' (overrides are key=value)");
    }
  }
}

RunConfig resolve(const Options& o, const std::string& section) {
  RunConfig cfg;
  if (!o.preset.empty()) cfg.apply_preset(o.preset);
  if (!o.config_file.empty()) cfg.load_file(o.config_file);
  apply_overrides(cfg, section, o.overrides);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (o.out) cfg.set("out", *o.out);
  return cfg;
}

void say(const std::string& s) {
  std::cout << s << '\n' << std::flush;
}

int cmd_synth(const Options& o) {
  const RunConfig cfg = resolve(o, "synth");
  const SynthSpec spec = cfg.synth();
  const fs::path dir = o.out ? fs::path(*o.out) : fs::path(cfg.get("data.root"));
  const std::size_t frames = synth_generate(spec, dir);
  cfg.echo(dir);
  say("wrote " + std::to_string(frames) + " frames: " + std::to_string(spec.subjects) +
      " subjects x " + std::to_string(spec.views.size()) + " views x " +
      std::to_string(spec.sequences) + " sequences under " + dir.string());
  return kOk;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = resolve(o, "train");
  const ModelConfig model = cfg.model();
  const TrainConfig tc = cfg.train();
  const DatasetIndex index = load_index(cfg);
  const SplitData data = load_splits(index, true, false);
  say("training on " + std::to_string(data.train.size()) + " sequences");
  ScnParams params = init_params(model, static_cast<std::uint64_t>(cfg.get_int("seed")));
  AdamState state;
  if (const auto& resume = cfg.get("train.resume"); !resume.empty()) {
    if (!fs::exists(resume)) throw ConfigError("train.resume: no checkpoint at " + resume);
    load_training_checkpoint(resume, params, state);
    say("resumed at step " + std::to_string(state.step));
  }
  cfg.echo(tc.out_dir);
  const std::uint64_t every = std::max<std::uint64_t>(1, tc.iterations / 100);
  const TrainResult r = train(params, state, data.train, tc, [&](const TraceRow& row) {
    if (row.step % every == 0 || row.step == tc.iterations) {
      char line[160];
      std::snprintf(line, sizeof line, "step %6llu  lr %.1e  loss %.5f  active %.3f  %.0f ms",
                    static_cast<unsigned long long>(row.step), row.lr, row.loss,
                    row.nonzero_fraction, row.wall_ms);
      say(line);
    }
  });
  if (r.early_stopped) say("early stop: active-triplet fraction below threshold");
  say("checkpoint " + r.checkpoint.string());
  return kOk;
}

ScnParams load_model(const RunConfig& cfg, const std::string& key) {
  const std::string path = cfg.get(key);
  if (path.empty()) throw ConfigError(key + " is required");
  if (!fs::exists(path)) throw ConfigError(key + ": no checkpoint at " + path);
  ScnParams params = init_params(cfg.model(), 0);
  Checkpoint ck;
  try {
    ck = read_checkpoint(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  load_params(params, ck);
  return params;
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve(o, "eval");
  ScnParams params = load_model(cfg, "eval.checkpoint");
  const bool sanity = cfg.get_bool("eval.gallery_is_probe");
  const SplitData data = load_splits(load_index(cfg), false, true);
  const EvalReport rep =
      evaluate(params, data, cfg.get_bool("eval.exclude_identical_view"),
               static_cast<std::size_t>(cfg.get_int("eval.threads")), sanity);
  const fs::path dir = fs::path(cfg.get("out")) / "eval";
  cfg.echo(dir);
  write_report(dir, rep);
  for (const auto& c : rep.conditions) std::cout << format_condition(c) << '\n';
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& s : rep.skipped) std::cerr << "skipped: " << s << '\n';
  say("report in " + dir.string());
  // Absent cells mean the request could not be answered in full.
  return rep.any_absent ? kNumeric : kOk;
}

int cmd_gradcheck(const Options& o) {
  const RunConfig cfg = resolve(o, "gradcheck");
  const auto rows = run_gradcheck_suite(cfg.gradcheck(), cfg.get("gradcheck.op"));
  const fs::path dir = fs::path(cfg.get("out")) / "gradcheck";
  cfg.echo(dir);
  std::ofstream csv(dir / "gradcheck.csv");
  csv << "op,max_rel_error,tolerance,coords,seconds,passed\n";
  bool ok = true;
  double total = 0.0;
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %10.3e  <= %.0e  %6zu coords  %6.2fs  %s",
                  r.name.c_str(), r.result.max_rel_error, r.tolerance, r.result.coords_checked,
                  r.seconds, r.result.passed ? "pass" : "FAIL");
    say(line);
    csv << r.name << ',' << r.result.max_rel_error << ',' << r.tolerance << ','
        << r.result.coords_checked << ',' << r.seconds << ',' << (r.result.passed ? 1 : 0) << '\n';
    ok = ok && r.result.passed;
    total += r.seconds;
  }
  char line[64];
  std::snprintf(line, sizeof line, "%zu checks in %.1fs", rows.size(), total);
  say(line);
  return ok ? kOk : kNumeric;
}

int cmd_dump(const Options& o) {
  const RunConfig cfg = resolve(o, "dump");
  const ModelConfig model = cfg.model();
  ScnParams params = cfg.get("dump.checkpoint").empty()
                         ? init_params(model, static_cast<std::uint64_t>(cfg.get_int("seed")))
                         : load_model(cfg, "dump.checkpoint");
  const std::string seq_dir = cfg.get("dump.sequence");
  if (seq_dir.empty()) throw ConfigError("dump.sequence (a directory of frames) is required");
  SequenceRecord rec;
  rec.path = seq_dir;
  try {
    rec.frames = frame_files(seq_dir);
  } catch (const Error& e) {
    throw ConfigError(std::string("dump.sequence: ") + e.what());
  }
  const FrameSequence seq = load_sequence(rec);
  Tape tape;
  tape.set_track_params(false);
  const auto templates = stage_templates(params, tape.constant(to_tensor(seq)));
  const fs::path dir = fs::path(cfg.get("out")) / "templates";
  cfg.echo(dir);
  for (std::size_t s = 0; s < 3; ++s) {
    if (!templates[s]) continue;
    const std::size_t n = dump_template_stack(dir, s + 1, templates[s]->maps.value());
    say("stage " + std::to_string(s + 1) + ": " + std::to_string(n) + " maps");
  }
  say("templates in " + dir.string());
  return kOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig cfg = resolve(o, "ablate");
  const ModelConfig base = cfg.model();
  const TrainConfig tc = cfg.train();
  const std::string kind = cfg.get("ablate.kind");
  const SplitData data = load_splits(load_index(cfg));
  const fs::path dir = fs::path(cfg.get("out")) / "ablate";
  cfg.echo(dir);
  std::vector<std::string> columns;
  for (const auto& s : data.probe_sets)
    if (std::find(columns.begin(), columns.end(), s) == columns.end()) columns.push_back(s);
  const RunFn run = make_run_fn(data, tc, static_cast<std::uint64_t>(cfg.get_int("seed")), say);

  if (kind == "bie" || kind == "mfa" || kind == "all") {
    std::vector<AblationRow> rows;
    for (auto& r : ablation_rows(base))
      if (kind == "all" || r.group == kind) rows.push_back(std::move(r));
    run_ablation(rows, run, [](const AblationRow& r) {
      say(r.group + " | " + r.label + (r.error.empty() ? "" : " | error: " + r.error));
    });
    write_ablation_csv(dir / "ablation.csv", rows, columns);
    const std::string table = format_ablation(rows, columns);
    std::ofstream(dir / "ablation.txt") << table;
    std::cout << table;
  }
  if (kind == "window" || kind == "all") {
    std::vector<std::size_t> windows;
    for (int w : cfg.get_ints("ablate.windows")) {
      if (w < 3) throw ConfigError("ablate.windows entries must be at least 3");
      windows.push_back(static_cast<std::size_t>(w));
    }
    const auto points = window_sweep(base, windows, run);
    write_sweep(dir, points, columns);
    std::ifstream in(dir / "window_sweep.txt");
    std::cout << in.rdbuf();
  }
  say("tables in " + dir.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Each training step allocates and frees a tape of several hundred MB; keep
  // it in the heap instead of mapping and faulting it in again every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Sequential convolutional network for gait recognition"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  std::string out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "key = value configuration file");
    sub->add_option("--preset", o.preset, "desk, casia-b or ou-mvlp");
    sub->add_option("--seed", seed, "global seed");
    sub->add_option("--out", out, "output directory");
    sub->allow_extras();
    return sub;
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Cmd cmds[] = {
      {"synth", "render the synthetic gait dataset", cmd_synth},
      {"train", "train a model; writes checkpoints and loss_trace.csv", cmd_train},
      {"eval", "cross-view rank-1 report for a checkpoint", cmd_eval},
      {"gradcheck", "finite-difference check of every operation", cmd_gradcheck},
      {"dump-templates", "write motion templates of one sequence as PGM grids", cmd_dump},
      {"ablate", "template x fusion grid, aggregator quadrant and window sweep", cmd_ablate},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) subs.push_back(add_common(app.add_subcommand(c.name, c.help)));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    if (subs[i]->count("--seed")) o.seed = seed;
    if (subs[i]->count("--out")) o.out = out;
    o.overrides = subs[i]->remaining();
    try {
      return cmds[i].fn(o);
    } catch (const ConfigError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kConfig;
    } catch (const IngestionError& e) {
      std::cerr << "configuration error: " << e.what() << '\n';
      return kConfig;
    } catch (const NumericError& e) {
      std::cerr << "numeric error: " << e.what() << '\n';
      return kNumeric;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kNumeric;
    }
  }
  return kConfig;
}
