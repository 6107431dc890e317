#include "arc/ensemble.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace arc {
namespace {

// Leave-one-out context for demonstration pair k (the pair itself when it
// is the only one).
std::vector<GridPair> loo_context(const std::vector<GridPair>& pairs, std::size_t k) {
  if (pairs.size() < 2) return pairs;
  std::vector<GridPair> out;
  out.reserve(pairs.size() - 1);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    if (j != k) out.push_back(pairs[j]);
  }
  return out;
}

TokenSeq target_tokens(const Grid& g, Order order) {
  TokenSeq t = encode_grid(g, order);
  t.push_back(tok::kEos);
  return t;
}

}  // namespace

TokenSeq view_prefix(const TaskRecord& viewed, std::size_t test_index, int max_ctx,
                     const EnsembleOptions& opts) {
  EpisodePrefix prefix =
      encode_episode(viewed.train, viewed.test[test_index].input, opts.order);
  return fit_context(std::move(prefix), max_ctx, opts.max_pairs).tokens;
}

ProposeResult propose(const Model& m, const TaskRecord& t, std::size_t test_index,
                      const std::vector<View>& views, bool views_are_survivors,
                      const EnsembleOptions& opts) {
  if (views.empty()) raise(ErrorCode::InvalidConfig, "propose needs at least one view");
  ProposeResult result;
  for (const View& v : views) {
    const TaskRecord viewed = apply_view_to_task(v, t);
    TokenSeq prefix;
    try {
      prefix = view_prefix(viewed, test_index, m.max_context(), opts);
    } catch (const Error& e) {
      result.failures.push_back({v, "context", e.what()});
      continue;
    }
    TokenSeq gen;
    try {
      gen = m.generate(prefix, opts.max_new);
    } catch (const Error& e) {
      result.failures.push_back({v, "generate", e.what()});
      continue;
    }
    if (gen.empty() || gen.back() != tok::kEos) {
      result.failures.push_back({v, "generate", "generation ended without EOS"});
      continue;
    }
    std::optional<Grid> decoded;
    try {
      decoded = decode_grid(std::span<const TokenId>(gen.data(), gen.size() - 1), opts.order);
    } catch (const Error& e) {
      result.failures.push_back({v, "decode", e.what()});
      continue;
    }
    const Grid canonical = apply_view(invert_view(v), *decoded);
    auto it = std::find_if(result.candidates.begin(), result.candidates.end(),
                           [&](const Candidate& c) { return c.grid == canonical; });
    if (it == result.candidates.end()) {
      result.candidates.push_back(
          Candidate{canonical, {}, 0.0, {v}, views_are_survivors});
    } else {
      it->source_views.push_back(v);
    }
  }
  if (result.candidates.empty()) {
    raise(ErrorCode::NoCandidates, "every view failed generation or decoding");
  }
  return result;
}

void poe_score(const Model& m, const TaskRecord& t, std::size_t test_index,
               const std::vector<View>& views, Candidate& c,
               std::vector<FailureRecord>* failures, const EnsembleOptions& opts) {
  if (views.empty()) raise(ErrorCode::InvalidConfig, "poe_score needs at least one view");
  c.per_view_scores.clear();
  c.total_score = 0.0;
  for (const View& v : views) {
    const TaskRecord viewed = apply_view_to_task(v, t);
    try {
      const TokenSeq prefix = view_prefix(viewed, test_index, m.max_context(), opts);
      const TokenSeq cont = target_tokens(apply_view(v, c.grid), opts.order);
      if (static_cast<int>(prefix.size() + cont.size()) > m.max_context()) {
        raise(ErrorCode::ContextExceeded, "scoring sequence exceeds context");
      }
      const double s = m.score(prefix, cont);
      c.per_view_scores.push_back({v, s});
      c.total_score += s;
    } catch (const Error& e) {
      if (failures != nullptr) failures->push_back({v, "score", e.what()});
    }
  }
  if (c.per_view_scores.empty()) {
    raise(ErrorCode::AllViewsSkipped, "no view could score the candidate in context");
  }
}

DemoFilterResult demo_filter(const Model& m, const TaskRecord& t,
                             const std::vector<View>& views, const EnsembleOptions& opts) {
  if (t.train.empty()) raise(ErrorCode::InvalidConfig, "demo_filter needs demonstrations");
  DemoFilterResult result;
  for (const View& v : views) {
    const TaskRecord viewed = apply_view_to_task(v, t);
    bool survives = true;
    for (std::size_t k = 0; k < viewed.train.size() && survives; ++k) {
      try {
        const std::vector<GridPair> context = loo_context(viewed.train, k);
        EpisodePrefix ep = encode_episode(context, viewed.train[k].input, opts.order);
        const TokenSeq prefix =
            fit_context(std::move(ep), m.max_context(), opts.max_pairs).tokens;
        const TokenSeq gen = m.generate(prefix, opts.max_new);
        if (gen.empty() || gen.back() != tok::kEos) {
          survives = false;
          break;
        }
        const Grid decoded =
            decode_grid(std::span<const TokenId>(gen.data(), gen.size() - 1), opts.order);
        survives = decoded == viewed.train[k].output;
      } catch (const Error&) {
        survives = false;
      }
    }
    if (survives) result.views.push_back(v);
  }
  if (result.views.empty()) {
    result.views = views;
    result.fallback = true;
  }
  return result;
}

std::vector<const Candidate*> rank_candidates(const std::vector<Candidate>& candidates) {
  std::vector<const Candidate*> ranked;
  const bool any_consistent =
      std::any_of(candidates.begin(), candidates.end(),
                  [](const Candidate& c) { return c.demo_consistent; });
  for (const Candidate& c : candidates) {
    if (!any_consistent || c.demo_consistent) ranked.push_back(&c);
  }
  std::sort(ranked.begin(), ranked.end(), [](const Candidate* a, const Candidate* b) {
    if (a->total_score != b->total_score) return a->total_score > b->total_score;
    return encode_grid(a->grid) < encode_grid(b->grid);
  });
  return ranked;
}

const Candidate& select(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) raise(ErrorCode::NoCandidates, "no scored candidates");
  return *rank_candidates(candidates).front();
}

View best_view(const Model& m, const TaskRecord& t, const std::vector<View>& views,
               const EnsembleOptions& opts) {
  if (views.empty()) raise(ErrorCode::InvalidConfig, "best_view needs at least one view");
  if (t.train.empty()) raise(ErrorCode::InvalidConfig, "best_view needs demonstrations");
  std::size_t best = 0;
  double best_total = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < views.size(); ++i) {
    const TaskRecord viewed = apply_view_to_task(views[i], t);
    double total = 0.0;
    for (std::size_t k = 0; k < viewed.train.size(); ++k) {
      try {
        const std::vector<GridPair> context = loo_context(viewed.train, k);
        EpisodePrefix ep = encode_episode(context, viewed.train[k].input, opts.order);
        const TokenSeq prefix =
            fit_context(std::move(ep), m.max_context(), opts.max_pairs).tokens;
        total += m.score(prefix, target_tokens(viewed.train[k].output, opts.order));
      } catch (const Error&) {
        // pair unusable under this view; contributes nothing
      }
    }
    if (total > best_total) {
      best_total = total;
      best = i;
    }
  }
  return views[best];
}

}  // namespace arc
