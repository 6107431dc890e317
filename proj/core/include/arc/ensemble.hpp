#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "arc/model.hpp"
#include "arc/serializer.hpp"
#include "arc/task.hpp"
#include "arc/views.hpp"

namespace arc {

// A deduplicated prediction in canonical (untransformed) orientation.
struct Candidate {
  Grid grid;
  std::vector<std::pair<View, double>> per_view_scores;
  double total_score = 0.0;
  std::vector<View> source_views;
  bool demo_consistent = false;
};

struct FailureRecord {
  View view;
  std::string stage;  // "context" | "generate" | "decode" | "score"
  std::string error;
};

struct EnsembleOptions {
  std::optional<int> max_pairs;  // context pair cap (Pipeline-1 uses 3)
  Order order = Order::RowMajor;
  // Generation budget per item; the default admits a maximal 30x30 grid.
  int max_new = kMaxTargetLen;
};

// Episode prefix for one view of the task, truncated to the model context.
TokenSeq view_prefix(const TaskRecord& viewed, std::size_t test_index, int max_ctx,
                     const EnsembleOptions& opts = {});

struct ProposeResult {
  std::vector<Candidate> candidates;
  std::vector<FailureRecord> failures;
};

// Per view: transform task, greedy-generate, strict-decode, invert the
// view. Failures are logged, not fatal; candidates are deduplicated by
// grid equality with source views unioned. Throws NoCandidates when every
// view fails.
ProposeResult propose(const Model& m, const TaskRecord& t, std::size_t test_index,
                      const std::vector<View>& views, bool views_are_survivors,
                      const EnsembleOptions& opts = {});

// Product-of-experts score: summed log-probability of the candidate's
// encoding under every view. Views that overflow the context are skipped
// and logged; throws AllViewsSkipped when none can score.
void poe_score(const Model& m, const TaskRecord& t, std::size_t test_index,
               const std::vector<View>& views, Candidate& c,
               std::vector<FailureRecord>* failures = nullptr,
               const EnsembleOptions& opts = {});

struct DemoFilterResult {
  std::vector<View> views;
  bool fallback = false;  // no view survived; all views returned
};

// A view survives iff greedy generation reproduces every demonstration
// output exactly under leave-one-out episodes. Never returns empty.
DemoFilterResult demo_filter(const Model& m, const TaskRecord& t,
                             const std::vector<View>& views,
                             const EnsembleOptions& opts = {});

// Candidates ordered best-first: demo-consistent candidates (when any
// exist) by descending total score, ties broken by lexicographically
// smallest grid encoding.
std::vector<const Candidate*> rank_candidates(const std::vector<Candidate>& candidates);

// Throws NoCandidates on empty input.
const Candidate& select(const std::vector<Candidate>& candidates);

// View whose leave-one-out demonstration log-likelihood sum is highest;
// ties resolve to the earliest view in the list.
View best_view(const Model& m, const TaskRecord& t, const std::vector<View>& views,
               const EnsembleOptions& opts = {});

}  // namespace arc
