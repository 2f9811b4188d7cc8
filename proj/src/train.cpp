#include "scn/train.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>

namespace scn {

void TrainConfig::validate() const {
  batch.validate();
  triplet.validate();
  if (threads == 0) throw ConfigError("train.threads must be at least 1");
  if (early_stop_nonzero < 0.0 || early_stop_nonzero > 1.0)
    throw ConfigError("train.early_stop_nonzero must be in [0, 1]");
  if (early_stop_window == 0) throw ConfigError("train.early_stop_window must be positive");
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * n / threads; i < (w + 1) * n / threads; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

TraceRow train_step_gradients(ScnParams& params, const std::vector<FrameSequence>& pool,
                              const Batch& batch, const TrainConfig& cfg) {
  const std::size_t b = batch.labels.size();
  std::vector<std::unique_ptr<Tape>> tapes(b);
  std::vector<Var> roots(b);
  std::vector<Tensor> features(b);

  // Forward: in recompute mode the graphs are dropped straight away.
  parallel_for(b, cfg.threads, [&](std::size_t i) {
    auto tape = std::make_unique<Tape>();
    tape->set_track_params(!cfg.recompute);
    const Tensor x = to_tensor(pool[batch.sequences[i]], batch.frames[i]);
    roots[i] = scn_forward(params, tape->constant(x));
    features[i] = roots[i].value();
    if (!cfg.recompute) tapes[i] = std::move(tape);
  });

  // Loss on a small graph whose leaves are the features.
  Tape head;
  std::vector<Var> leaves;
  for (auto& f : features) leaves.push_back(head.variable(f));
  const TripletResult tr = triplet_loss_ba(leaves, batch.labels, cfg.triplet);
  head.backward(tr.loss);
  TraceRow row;
  row.loss = tr.loss.value()[0];
  row.nonzero_fraction = tr.nonzero_fraction;
  if (!std::isfinite(row.loss)) throw NumericError("training loss is not finite");

  parallel_for(b, cfg.threads, [&](std::size_t i) {
    const auto upstream = head.grad(leaves[i]);
    if (cfg.recompute) {
      tapes[i] = std::make_unique<Tape>();
      const Tensor x = to_tensor(pool[batch.sequences[i]], batch.frames[i]);
      roots[i] = scn_forward(params, tapes[i]->constant(x));
    }
    tapes[i]->backward(roots[i], upstream);
  });
  // Accumulate in batch order so the sum does not depend on scheduling.
  for (auto& t : tapes) {
    t->flush_param_grads();
    t.reset();
  }
  return row;
}

void save_training_checkpoint(const std::filesystem::path& path, ScnParams& params,
                              const AdamState& state) {
  std::vector<std::pair<std::string, const Tensor*>> all;
  auto named = params.named();
  for (auto& [name, t] : named) all.emplace_back(name, t);
  if (!state.m.empty())
    for (std::size_t k = 0; k < named.size(); ++k) {
      all.emplace_back("optim.m." + named[k].first, &state.m[k]);
      all.emplace_back("optim.v." + named[k].first, &state.v[k]);
    }
  write_checkpoint(path.string(), state.step, all);
}

void load_training_checkpoint(const std::filesystem::path& path, ScnParams& params,
                              AdamState& state) {
  const Checkpoint ck = read_checkpoint(path.string());
  load_params(params, ck);
  state = AdamState{};
  state.step = ck.step;
  auto named = params.named();
  if (ck.step == 0 && !ck.find("optim.m." + named.front().first)) return;
  for (auto& [name, t] : named) {
    const Tensor* m = ck.find("optim.m." + name);
    const Tensor* v = ck.find("optim.v." + name);
    if (!m || !v) throw ConfigError("checkpoint " + path.string() + " lacks optimiser state for " + name);
    if (m->shape() != t->shape() || v->shape() != t->shape())
      throw ConfigError("optimiser state for " + name + " has the wrong shape");
    state.m.push_back(*m);
    state.v.push_back(*v);
  }
}

TrainResult train(ScnParams& params, AdamState& state, const std::vector<FrameSequence>& pool,
                  const TrainConfig& cfg, const std::function<void(const TraceRow&)>& on_step) {
  cfg.validate();
  BatchSampler sampler(pool, cfg.batch, cfg.seed);
  const bool files = !cfg.out_dir.empty();
  std::ofstream trace;
  TrainResult res;
  auto checkpoint = [&] {
    if (!files) return;
    res.checkpoint = cfg.out_dir / ("ckpt_" + std::to_string(state.step) + ".scn");
    save_training_checkpoint(res.checkpoint, params, state);
  };
  if (files) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "loss_trace.csv";
    const bool resume = state.step > 0 && std::filesystem::exists(path);
    trace.open(path, resume ? std::ios::app : std::ios::trunc);
    if (!trace) throw Error("cannot write " + path.string());
    if (!resume) trace << "step,lr,loss,nonzero_fraction,wall_ms\n";
    trace.precision(17);
  }
  if (state.step == 0) checkpoint();

  auto named = params.named();
  std::deque<double> recent;
  double recent_sum = 0.0;
  while (state.step < cfg.iterations) {
    const auto t0 = std::chrono::steady_clock::now();
    params.zero_grads();
    const Batch batch = sampler.batch(state.step);
    TraceRow row = train_step_gradients(params, pool, batch, cfg);
    row.lr = cfg.lr.at(state.step);
    optimizer_step(named, state, row.lr);
    row.step = state.step;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (files) {
      trace << row.step << ',' << row.lr << ',' << row.loss << ',' << row.nonzero_fraction << ','
            << row.wall_ms << '\n';
      trace.flush();
    }
    if (on_step) on_step(row);
    res.last = row;
    ++res.steps;

    recent.push_back(row.nonzero_fraction);
    recent_sum += row.nonzero_fraction;
    if (recent.size() > cfg.early_stop_window) {
      recent_sum -= recent.front();
      recent.pop_front();
    }
    const bool stop = cfg.early_stop_nonzero > 0.0 && recent.size() == cfg.early_stop_window &&
                      recent_sum / static_cast<double>(recent.size()) < cfg.early_stop_nonzero;
    const bool last = stop || state.step == cfg.iterations;
    if (last || (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0)) checkpoint();
    if (stop) {
      res.early_stopped = true;
      break;
    }
  }
  params.zero_grads();
  return res;
}

}  // namespace scn
