#pragma once

// Test-only helpers: random grids, a small generated task family
// (identity / horizontal flip / color swap), and scriptable stub models.

#include <functional>
#include <string>
#include <vector>

#include "arc/model.hpp"
#include "arc/rng.hpp"
#include "arc/serializer.hpp"
#include "arc/task.hpp"
#include "arc/views.hpp"

namespace arc::testing {

inline Grid random_grid(Rng& rng, int max_h = kMaxGridDim, int max_w = kMaxGridDim,
                        int min_h = 1, int min_w = 1) {
  const int h = rng.next_int(min_h, max_h);
  const int w = rng.next_int(min_w, max_w);
  std::vector<Color> cells(static_cast<std::size_t>(h) * w);
  for (Color& c : cells) c = static_cast<Color>(rng.next_below(kNumColors));
  return Grid(h, w, std::move(cells));
}

inline ColorMap random_color_map(Rng& rng, bool fix_background = false) {
  std::array<Color, kNumColors> table;
  for (int i = 0; i < kNumColors; ++i) table[static_cast<std::size_t>(i)] = Color(i);
  if (fix_background) {
    rng.shuffle(table.data() + 1, kNumColors - 1);
  } else {
    rng.shuffle(table.data(), kNumColors);
  }
  return ColorMap::from_table(table);
}

// --- generated task family ----------------------------------------------

enum class RuleKind { Identity, HFlip, ColorSwap };

inline Grid apply_rule(RuleKind rule, const Grid& g, Color a, Color b) {
  switch (rule) {
    case RuleKind::Identity: return g;
    case RuleKind::HFlip: return apply_geo(GeometricOp::FlipH, g);
    case RuleKind::ColorSwap: {
      std::vector<Color> cells = g.cells();
      for (Color& c : cells) {
        if (c == a) {
          c = b;
        } else if (c == b) {
          c = a;
        }
      }
      return Grid(g.height(), g.width(), std::move(cells));
    }
  }
  return g;
}

// Grid over a fixed 4-color palette with every palette color present and,
// when required, no left-right symmetry. Keeping the palette dense makes
// the three rules mutually distinguishable from the demonstrations.
inline Grid family_grid(Rng& rng, const std::vector<Color>& pal, bool need_asymmetric) {
  for (;;) {
    const int h = rng.next_int(2, 6);
    const int w = rng.next_int(2, 6);
    std::vector<Color> cells(static_cast<std::size_t>(h) * w);
    for (Color& c : cells) c = pal[rng.next_below(pal.size())];
    for (std::size_t k = 0; k < pal.size(); ++k) {
      cells[rng.next_below(cells.size())] = pal[k];
    }
    Grid g(h, w, std::move(cells));
    bool has_all = true;
    for (const Color c : pal) {
      bool found = false;
      for (const Color x : g.cells()) {
        if (x == c) found = true;
      }
      has_all = has_all && found;
    }
    if (!has_all) continue;
    if (need_asymmetric && g == apply_geo(GeometricOp::FlipH, g)) continue;
    return g;
  }
}

inline TaskRecord make_family_task(RuleKind rule, std::uint64_t seed, const std::string& id) {
  Rng rng(seed);
  std::vector<Color> pal;
  {
    std::array<Color, kNumColors> all;
    for (int i = 0; i < kNumColors; ++i) all[static_cast<std::size_t>(i)] = Color(i);
    rng.shuffle(all.data(), all.size());
    pal.assign(all.begin(), all.begin() + 4);
  }
  const Color a = pal[0], b = pal[1];

  TaskRecord t;
  t.id = id;
  for (int k = 0; k < 3; ++k) {
    const Grid in = family_grid(rng, pal, /*need_asymmetric=*/true);
    t.train.push_back({in, apply_rule(rule, in, a, b)});
  }
  const Grid test_in = family_grid(rng, pal, /*need_asymmetric=*/true);
  t.test.push_back({test_in, apply_rule(rule, test_in, a, b)});
  return t;
}

inline TaskSet make_family_corpus(int n, std::uint64_t seed, const std::string& prefix = "task") {
  TaskSet out;
  for (int i = 0; i < n; ++i) {
    const RuleKind rule = static_cast<RuleKind>(i % 3);
    out.push_back(make_family_task(rule, splitmix64(seed ^ (0x41u + std::uint64_t(i))),
                                   prefix + std::to_string(i)));
  }
  return out;
}

// --- stub models ----------------------------------------------------------

// Fully scriptable backend for ensemble/harness tests.
class CallbackModel : public Model {
 public:
  std::function<TokenSeq(std::span<const TokenId>, int)> on_generate;
  std::function<double(std::span<const TokenId>, std::span<const TokenId>)> on_score;
  int ctx = kDefaultMaxCtx;

  TokenSeq generate(std::span<const TokenId> prefix, int max_new) const override {
    return on_generate(prefix, max_new);
  }
  double score(std::span<const TokenId> prefix,
               std::span<const TokenId> continuation) const override {
    return on_score ? on_score(prefix, continuation) : 0.0;
  }
  int max_context() const override { return ctx; }
};

// The grid encoded immediately before the final [SEP_IO] of an episode
// prefix, i.e. the (pseudo-)test input the model is being asked about.
inline Grid last_input_grid(std::span<const TokenId> prefix, Order order = Order::RowMajor) {
  std::size_t end = prefix.size();
  while (end > 0 && prefix[end - 1] != tok::kSepIo) --end;
  std::size_t begin = end > 0 ? end - 1 : 0;
  while (begin > 0 && prefix[begin - 1] != tok::kBos && prefix[begin - 1] != tok::kSepEx) {
    --begin;
  }
  return decode_grid(prefix.subspan(begin, (end > 0 ? end - 1 : 0) - begin), order);
}

inline TokenSeq encode_with_eos(const Grid& g, Order order = Order::RowMajor) {
  TokenSeq t = encode_grid(g, order);
  t.push_back(tok::kEos);
  return t;
}

// Echoes the episode's test input as its answer; an exact oracle for
// identity-rule tasks under every view.
inline CallbackModel make_echo_input_model() {
  CallbackModel m;
  m.on_generate = [](std::span<const TokenId> prefix, int) {
    return encode_with_eos(last_input_grid(prefix));
  };
  return m;
}

// Answers with a fixed grid no matter the episode.
inline CallbackModel make_constant_model(const Grid& g) {
  CallbackModel m;
  m.on_generate = [g](std::span<const TokenId>, int) { return encode_with_eos(g); };
  return m;
}

// Answers correctly only when the pseudo-test input matches one of the
// task's untransformed inputs (train pairs and test items with outputs);
// anything else gets a constant wrong answer.
inline CallbackModel make_exact_lookup_model(const TaskRecord& t, const Grid& wrong) {
  std::vector<GridPair> known;
  for (const GridPair& p : t.train) known.push_back(p);
  for (const TestItem& item : t.test) {
    if (item.output) known.push_back({item.input, *item.output});
  }
  CallbackModel m;
  m.on_generate = [known, wrong](std::span<const TokenId> prefix, int) {
    const Grid in = last_input_grid(prefix);
    for (const GridPair& p : known) {
      if (p.input == in) return encode_with_eos(p.output);
    }
    return encode_with_eos(wrong);
  };
  return m;
}

}  // namespace arc::testing
