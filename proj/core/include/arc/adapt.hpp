#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "arc/task.hpp"
#include "arc/tinylm.hpp"
#include "arc/views.hpp"

namespace arc {

constexpr int kMaxTTTSteps = 50;

struct AdapterConfig {
  int rank = 8;
  float alpha = 16.0f;
  float dropout = 0.20f;
  std::vector<std::string> targets = {"attn_q", "attn_v"};

  void validate() const;  // throws InvalidConfig / UnknownTarget
};

struct TTTConfig {
  int steps = 10;  // ceiling kMaxTTTSteps
  float learning_rate = 5e-5f;
  int patience = 3;
  int eval_every = 2;
  double min_improvement = 1e-4;
  std::uint64_t seed = 0;
  // Ablation: update the full weight copy instead of adapter factors.
  bool full_finetune = false;

  void validate() const;
};

// Frozen base parameters plus trainable low-rank factors. The base is
// never modified; with all-zero B factors the adapted forward equals the
// base forward exactly.
struct AdaptedModel {
  const Params* base = nullptr;
  ModelConfig config;
  AdapterConfig adapter_config;
  AdapterSet<float> adapters;
  // Present only in full-finetune mode: a private mutable weight copy.
  std::optional<Params> finetuned;

  const Params& effective_params() const { return finetuned ? *finetuned : *base; }
  const AdapterSet<float>* adapter_ptr() const { return finetuned ? nullptr : &adapters; }
};

AdapterTarget parse_adapter_target(const std::string& name);  // throws UnknownTarget

// A initialized normal(0, 0.02) from seed, B zero, so attaching never
// changes model outputs.
AdaptedModel attach_adapters(const Params& base, const ModelConfig& cfg,
                             const AdapterConfig& acfg, std::uint64_t seed);

std::int64_t count_adapter_params(const ModelConfig& cfg, const AdapterConfig& acfg);

// Leave-one-out augmented episodes from the task's demonstrations: per
// view, each pair serves once as the pseudo-test target. Episodes that
// overflow the context are dropped; throws EmptyTTTSet if all drop.
std::vector<TrainingEpisode> build_ttt_set(const TaskRecord& t, const std::vector<View>& views,
                                           bool leave_one_out = true,
                                           int max_ctx = kDefaultMaxCtx,
                                           std::optional<int> max_pairs = std::nullopt);

struct TTTTraceEntry {
  int step;
  double train_loss;
  std::optional<double> eval_loss;
};

struct TTTResult {
  std::vector<TTTTraceEntry> trace;
  double initial_eval = 0.0;
  double best_eval = 0.0;
  int steps_run = 0;
  bool stopped_early = false;
};

// Plain gradient descent on the adapter factors with adapter dropout
// active; demonstration loss evaluated with dropout off every eval_every
// steps; stops when improvement stalls for `patience` evaluations. The
// model is left holding the factors with the best evaluation loss.
TTTResult ttt_run(AdaptedModel& m, const std::vector<TrainingEpisode>& episodes,
                  const TTTConfig& tcfg);

// Standalone parameters with W' = W + (alpha/rank) B A folded in.
Params merge_adapters(const AdaptedModel& m);

}  // namespace arc
