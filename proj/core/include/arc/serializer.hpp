#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arc/grid.hpp"
#include "arc/task.hpp"

namespace arc {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Fixed 46-token vocabulary. Ids are a stable public contract:
//   BOS=0 EOS=1 SEP_IO=2 SEP_EX=3 ROW=4 PAD=5
//   SIZE(1..30)=6..35  C(0..9)=36..45
namespace tok {

constexpr TokenId kBos = 0;
constexpr TokenId kEos = 1;
constexpr TokenId kSepIo = 2;
constexpr TokenId kSepEx = 3;
constexpr TokenId kRow = 4;
constexpr TokenId kPad = 5;
constexpr TokenId kSizeBase = 6;   // SIZE(n) = kSizeBase + n - 1
constexpr TokenId kColorBase = 36; // C(c) = kColorBase + c
constexpr int kVocabSize = 46;

TokenId size_token(int n);
TokenId color_token(int c);
constexpr bool is_size(TokenId t) { return t >= kSizeBase && t < kColorBase; }
constexpr int size_value(TokenId t) { return t - kSizeBase + 1; }
constexpr bool is_color(TokenId t) { return t >= kColorBase && t < kVocabSize; }
constexpr int color_value(TokenId t) { return t - kColorBase; }

}  // namespace tok

constexpr int kVocabVersion = 1;
constexpr int kDefaultMaxCtx = 2048;
// Largest grid encoding: SIZE,SIZE + 30*30 colors + 29 row separators.
constexpr int kMaxGridEncodingLen = 2 + kMaxGridDim * kMaxGridDim + (kMaxGridDim - 1);
// Worst-case generation target: a maximal grid plus EOS.
constexpr int kMaxTargetLen = kMaxGridEncodingLen + 1;

// Token name <-> id tables, mutually inverse by construction.
struct Vocab {
  int version = kVocabVersion;
  std::vector<std::string> names;  // index = token id

  TokenId id_of(const std::string& name) const;  // throws UnknownToken
  const std::string& name_of(TokenId id) const;  // throws UnknownToken
};

Vocab build_vocab();

// Cell traversal order. Column-major exists only to reproduce the
// alternative-serialization ensemble ablation; row-major is the default
// everywhere.
enum class Order { RowMajor, ColMajor };

// SIZE(height), SIZE(width), then cells with a single ROW token between
// consecutive rows (columns for ColMajor). Never emits PAD.
TokenSeq encode_grid(const Grid& g, Order order = Order::RowMajor);

// Strict inverse of encode_grid: accepts exactly its image. Errors:
// BadHeader, RowLengthMismatch, RowCountMismatch, UnexpectedToken,
// TrailingTokens, Truncated.
Grid decode_grid(std::span<const TokenId> seq, Order order = Order::RowMajor);

// Episode prefix: BOS, then (input SEP_IO output SEP_EX) per pair, then
// the test input and a final SEP_IO. Span bookkeeping supports context
// truncation and loss masking.
struct EpisodePrefix {
  struct PairSpan {
    std::size_t begin, end;          // [begin,end) of the whole pair block
    std::size_t out_begin, out_end;  // [b,e) of the output-grid encoding
  };
  TokenSeq tokens;
  std::vector<PairSpan> pairs;
  std::size_t n_pairs() const { return pairs.size(); }
};

EpisodePrefix encode_episode(const std::vector<GridPair>& pairs, const Grid& test_input,
                             Order order = Order::RowMajor);

// Drops whole earliest pairs until prefix length plus the worst-case
// target reserve fits max_ctx (and until at most max_pairs remain, when
// given). Throws ContextOverflow when even a pair-free prefix cannot fit.
EpisodePrefix fit_context(EpisodePrefix prefix, int max_ctx = kDefaultMaxCtx,
                          std::optional<int> max_pairs = std::nullopt);

// Positions carrying loss: every output-grid token plus the final EOS.
struct SegmentBounds {
  std::vector<std::pair<std::size_t, std::size_t>> output_segments;  // [b,e)
  std::size_t eos_pos = 0;
};

std::vector<std::uint8_t> loss_mask(const TokenSeq& tokens, const SegmentBounds& bounds);

// Fully assembled training episode: prefix ++ target grid ++ EOS with its
// loss mask.
struct TrainingEpisode {
  TokenSeq tokens;
  std::vector<std::uint8_t> mask;
  std::size_t target_begin = 0;  // first token of the target-grid encoding
};

TrainingEpisode build_training_episode(const std::vector<GridPair>& pairs,
                                       const Grid& test_input, const Grid& test_output,
                                       int max_ctx = kDefaultMaxCtx,
                                       std::optional<int> max_pairs = std::nullopt,
                                       Order order = Order::RowMajor);

}  // namespace arc
