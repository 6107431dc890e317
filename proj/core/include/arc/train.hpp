#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "arc/task.hpp"
#include "arc/tinylm.hpp"
#include "arc/views.hpp"

namespace arc {

struct TrainHyper {
  int steps = 1000;
  int batch_size = 16;
  float peak_lr = 3e-4f;
  int warmup_steps = -1;  // -1: 2% of steps, at least 1
  float weight_decay = 0.01f;
  float clip_norm = 1.0f;
  int views_per_task = 64;
  bool fix_background = true;
  // Loss on output grids plus EOS; false trains on every position instead.
  bool mask_outputs_only = true;
  // Also sample held-out demonstration pairs as targets, not just test items.
  bool include_loo_targets = true;
  std::optional<int> max_pairs;
  int log_every = 50;
  int threads = 0;  // 0: hardware concurrency
};

struct TrainLogEntry {
  int step;
  double loss;
  double lr;
};

struct TrainResult {
  Params params;
  std::vector<TrainLogEntry> trace;
};

// Optional periodic probe; returning true ends training after the current
// step (the trace records how far the run went).
using StopCheck = std::function<bool(int step, const Params& params)>;

// Sample task -> sample view -> build episode -> batch -> grads -> AdamW.
// Deterministic given (corpus order, cfg, hyper, seed) on one machine.
// Throws NoTrainableEpisodes when no episode fits the context window.
TrainResult pretrain(const TaskSet& corpus, const ModelConfig& cfg, const TrainHyper& hyper,
                     std::uint64_t seed, std::ostream* log = nullptr,
                     const StopCheck& stop_check = {}, int check_every = 0);

}  // namespace arc
