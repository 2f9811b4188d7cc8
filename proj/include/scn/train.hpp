#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "scn/data.hpp"
#include "scn/loss.hpp"
#include "scn/network.hpp"

namespace scn {

struct TrainConfig {
  BatchSpec batch;
  TripletConfig triplet;
  LrSchedule lr;
  std::uint64_t iterations = 5000;
  std::uint64_t seed = 1;
  std::uint64_t checkpoint_every = 1000;  // 0: only the first and last
  // Stop once the mean nonzero_fraction of the last `window` steps falls
  // below the threshold (0 disables).
  double early_stop_nonzero = 0.0;
  std::uint64_t early_stop_window = 20;
  // Two passes per step: features without a graph, then one segment at a
  // time with its graph. Trades time for memory on large batches.
  bool recompute = false;
  std::size_t threads = 1;
  std::filesystem::path out_dir;  // empty: no files written

  void validate() const;
};

struct TraceRow {
  std::uint64_t step = 0;  // updates completed
  double lr = 0.0;
  double loss = 0.0;
  double nonzero_fraction = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::uint64_t steps = 0;
  bool early_stopped = false;
  TraceRow last;
  std::filesystem::path checkpoint;
};

// Loss and gradients of one batch; parameter gradients are accumulated into
// each parameter's grad() in a fixed order independent of `threads`.
TraceRow train_step_gradients(ScnParams& params, const std::vector<FrameSequence>& pool,
                              const Batch& batch, const TrainConfig& cfg);

// Runs from state.step up to cfg.iterations, writing loss_trace.csv and
// ckpt_{step}.scn into cfg.out_dir.
TrainResult train(ScnParams& params, AdamState& state, const std::vector<FrameSequence>& pool,
                  const TrainConfig& cfg,
                  const std::function<void(const TraceRow&)>& on_step = {});

void save_training_checkpoint(const std::filesystem::path& path, ScnParams& params,
                              const AdamState& state);
// Restores parameters and optimiser state written by save_training_checkpoint.
void load_training_checkpoint(const std::filesystem::path& path, ScnParams& params,
                              AdamState& state);

// Runs fn(i) for i in [0, n) on up to `threads` workers, each taking a
// contiguous block. Exceptions are rethrown in the caller.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace scn
