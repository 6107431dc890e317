#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "arc/adapt.hpp"
#include "arc/ensemble.hpp"
#include "arc/model.hpp"
#include "arc/task.hpp"

namespace arc {

// The four inference configurations of the ablation evaluator.
enum class StrategyKind { Baseline, PoE, TTT, TTT_PoE };

const char* strategy_name(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);  // throws NoStrategies

struct StrategyConfig {
  int views = 64;
  bool fix_background = true;
  AdapterConfig adapter;
  TTTConfig ttt;
  // Pipeline-1 mode: greedy strategies use the best-scoring view instead
  // of the identity, and the context keeps at most 3 pairs.
  bool pipeline1 = false;
  std::optional<int> max_pairs;
  int attempts = 1;  // pass@2 when 2 (candidate strategies only)
  Order order = Order::RowMajor;
  int max_new = kMaxTargetLen;  // generation budget per test item
};

enum class ItemStatus { Correct, IncorrectValid, FailedGeneration };
const char* item_status_name(ItemStatus s);

struct ItemResult {
  ItemStatus status = ItemStatus::FailedGeneration;
  bool scored = false;  // ground truth available
  std::optional<Grid> prediction;
  std::string failure;
  double wall_ms = 0.0;
};

struct TaskResult {
  std::string task_id;
  StrategyKind strategy = StrategyKind::Baseline;
  std::vector<ItemResult> items;
  double wall_ms = 0.0;
};

// Generation backend plus, for the TTT strategies, the raw parameters the
// adapters attach to. Stub-backed contexts support Baseline and PoE only.
struct SolveContext {
  const Model* model = nullptr;
  const Params* base_params = nullptr;
  const ModelConfig* config = nullptr;
  std::string checkpoint_hash = "none";
};

// Runs one strategy on one task. Item failures are captured in the
// result; no error escapes.
TaskResult run_strategy(const SolveContext& ctx, const TaskRecord& t, StrategyKind kind,
                        const StrategyConfig& cfg, std::uint64_t seed);

struct StrategyAggregate {
  std::string name;
  std::int64_t n_tasks = 0;
  std::int64_t n_items = 0;
  std::int64_t n_scorable = 0;
  std::int64_t n_correct = 0;
  std::int64_t n_valid = 0;
  std::int64_t n_failed = 0;

  double accuracy() const { return n_scorable ? double(n_correct) / double(n_scorable) : 0.0; }
  double valid_rate() const { return n_items ? double(n_valid) / double(n_items) : 0.0; }
  double failed_rate() const { return n_items ? double(n_failed) / double(n_items) : 0.0; }
};

struct EvalReport {
  struct Meta {
    std::string checkpoint_hash = "none";
    std::uint64_t seed = 0;
    int views = 0;
    int attempts = 1;
    std::string unit = "items";  // rates count test items, not tasks
  };
  Meta meta;
  std::vector<StrategyAggregate> strategies;
  std::vector<TaskResult> tasks;
};

// Evaluates every strategy on every task. Tasks run independently with
// per-task seeds (seed xor fnv1a(task id)), so parallel and serial runs
// produce identical reports. Throws NoStrategies on an empty kind list.
EvalReport evaluate(const SolveContext& ctx, const TaskSet& ts,
                    const std::vector<StrategyKind>& kinds, const StrategyConfig& cfg,
                    int parallelism, std::uint64_t seed);

// Recomputes the per-strategy aggregates from the per-task rows.
std::vector<StrategyAggregate> aggregate_results(const std::vector<TaskResult>& tasks);

// --- ARC-AGI JSON ingestion -------------------------------------------

// tasks_path: a single-task JSON file, a file mapping id -> task, or a
// directory of per-task JSON files. solutions_path: optional file mapping
// id -> list of output grids (one per test item).
TaskSet load_tasks(const std::string& tasks_path,
                   const std::string& solutions_path = std::string());

// --- report emission ---------------------------------------------------

enum class ReportFormat { Json, Csv };

std::string render_report_json(const EvalReport& r);
std::string render_report_csv(const EvalReport& r);
void print_report_summary(const EvalReport& r, std::ostream& os);

// Writes the report and prints the fixed-width summary table to stdout.
void emit_report(const EvalReport& r, const std::string& path, ReportFormat format);

// Parses a report back from its JSON rendering (round-trip checks).
EvalReport parse_report_json(const std::string& text);

}  // namespace arc
