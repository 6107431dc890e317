#include "arc/serializer.hpp"

#include <algorithm>

namespace arc {

namespace tok {

TokenId size_token(int n) {
  if (n < 1 || n > kMaxGridDim) {
    raise(ErrorCode::UnknownToken, "SIZE value " + std::to_string(n) + " out of [1,30]");
  }
  return kSizeBase + n - 1;
}

TokenId color_token(int c) {
  if (c < 0 || c >= kNumColors) {
    raise(ErrorCode::UnknownToken, "color value " + std::to_string(c) + " out of [0,9]");
  }
  return kColorBase + c;
}

}  // namespace tok

Vocab build_vocab() {
  Vocab v;
  v.names = {"[BOS]", "[EOS]", "[SEP_IO]", "[SEP_EX]", "[ROW]", "[PAD]"};
  for (int n = 1; n <= kMaxGridDim; ++n) v.names.push_back("S" + std::to_string(n));
  for (int c = 0; c < kNumColors; ++c) v.names.push_back("C" + std::to_string(c));
  return v;
}

TokenId Vocab::id_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) raise(ErrorCode::UnknownToken, "no token named " + name);
  return static_cast<TokenId>(it - names.begin());
}

const std::string& Vocab::name_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names.size()) {
    raise(ErrorCode::UnknownToken, "token id " + std::to_string(id) + " out of range");
  }
  return names[static_cast<std::size_t>(id)];
}

TokenSeq encode_grid(const Grid& g, Order order) {
  const int h = g.height();
  const int w = g.width();
  const int groups = order == Order::RowMajor ? h : w;
  const int group_len = order == Order::RowMajor ? w : h;
  TokenSeq out;
  out.reserve(2 + static_cast<std::size_t>(h) * w + groups - 1);
  out.push_back(tok::size_token(h));
  out.push_back(tok::size_token(w));
  for (int i = 0; i < groups; ++i) {
    if (i > 0) out.push_back(tok::kRow);
    for (int j = 0; j < group_len; ++j) {
      const Color c = order == Order::RowMajor ? g.at(i, j) : g.at(j, i);
      out.push_back(tok::color_token(c));
    }
  }
  return out;
}

Grid decode_grid(std::span<const TokenId> seq, Order order) {
  const auto at = [&](std::size_t i) { return seq[i]; };
  if (seq.size() < 2 || !tok::is_size(at(0)) || !tok::is_size(at(1))) {
    raise(ErrorCode::BadHeader, "expected SIZE(height) SIZE(width) header");
  }
  const int h = tok::size_value(at(0));
  const int w = tok::size_value(at(1));
  const int groups = order == Order::RowMajor ? h : w;
  const int group_len = order == Order::RowMajor ? w : h;

  std::vector<Color> cells(static_cast<std::size_t>(h) * w);
  std::size_t pos = 2;
  for (int i = 0; i < groups; ++i) {
    if (i > 0) {
      if (pos >= seq.size()) raise(ErrorCode::Truncated, "sequence ends before all rows");
      const TokenId t = at(pos);
      if (tok::is_color(t)) {
        raise(ErrorCode::RowLengthMismatch,
              "row " + std::to_string(i - 1) + " longer than declared width");
      }
      if (t != tok::kRow) {
        raise(ErrorCode::UnexpectedToken,
              "expected [ROW] at position " + std::to_string(pos));
      }
      ++pos;
    }
    for (int j = 0; j < group_len; ++j) {
      if (pos >= seq.size()) raise(ErrorCode::Truncated, "sequence ends inside a row");
      const TokenId t = at(pos);
      if (t == tok::kRow) {
        raise(ErrorCode::RowLengthMismatch,
              "row " + std::to_string(i) + " shorter than declared width");
      }
      if (!tok::is_color(t)) {
        raise(ErrorCode::UnexpectedToken, "expected color token at position " +
                                              std::to_string(pos) + ", got id " +
                                              std::to_string(t));
      }
      const int r = order == Order::RowMajor ? i : j;
      const int c = order == Order::RowMajor ? j : i;
      cells[static_cast<std::size_t>(r) * w + c] = static_cast<Color>(tok::color_value(t));
      ++pos;
    }
  }
  if (pos < seq.size()) {
    if (at(pos) == tok::kRow) {
      raise(ErrorCode::RowCountMismatch, "more rows than declared height");
    }
    raise(ErrorCode::TrailingTokens,
          std::to_string(seq.size() - pos) + " tokens after a complete grid");
  }
  return Grid(h, w, std::move(cells));
}

EpisodePrefix encode_episode(const std::vector<GridPair>& pairs, const Grid& test_input,
                             Order order) {
  if (pairs.empty()) raise(ErrorCode::InvalidConfig, "episode needs at least one pair");
  EpisodePrefix ep;
  ep.tokens.push_back(tok::kBos);
  for (const GridPair& p : pairs) {
    EpisodePrefix::PairSpan span;
    span.begin = ep.tokens.size();
    const TokenSeq in = encode_grid(p.input, order);
    ep.tokens.insert(ep.tokens.end(), in.begin(), in.end());
    ep.tokens.push_back(tok::kSepIo);
    span.out_begin = ep.tokens.size();
    const TokenSeq out = encode_grid(p.output, order);
    ep.tokens.insert(ep.tokens.end(), out.begin(), out.end());
    span.out_end = ep.tokens.size();
    ep.tokens.push_back(tok::kSepEx);
    span.end = ep.tokens.size();
    ep.pairs.push_back(span);
  }
  const TokenSeq ti = encode_grid(test_input, order);
  ep.tokens.insert(ep.tokens.end(), ti.begin(), ti.end());
  ep.tokens.push_back(tok::kSepIo);
  return ep;
}

EpisodePrefix fit_context(EpisodePrefix prefix, int max_ctx, std::optional<int> max_pairs) {
  const auto drop_first_pair = [&]() {
    const EpisodePrefix::PairSpan dropped = prefix.pairs.front();
    const std::size_t len = dropped.end - dropped.begin;
    prefix.tokens.erase(prefix.tokens.begin() + static_cast<std::ptrdiff_t>(dropped.begin),
                        prefix.tokens.begin() + static_cast<std::ptrdiff_t>(dropped.end));
    prefix.pairs.erase(prefix.pairs.begin());
    for (EpisodePrefix::PairSpan& s : prefix.pairs) {
      s.begin -= len;
      s.end -= len;
      s.out_begin -= len;
      s.out_end -= len;
    }
  };

  if (max_pairs) {
    while (static_cast<int>(prefix.n_pairs()) > *max_pairs) drop_first_pair();
  }
  const std::size_t budget = max_ctx > kMaxTargetLen
                                 ? static_cast<std::size_t>(max_ctx - kMaxTargetLen)
                                 : 0;
  while (prefix.tokens.size() > budget && !prefix.pairs.empty()) drop_first_pair();
  if (prefix.tokens.size() > budget) {
    raise(ErrorCode::ContextOverflow,
          "prefix of " + std::to_string(prefix.tokens.size()) +
              " tokens cannot fit a worst-case target in a context of " +
              std::to_string(max_ctx));
  }
  return prefix;
}

std::vector<std::uint8_t> loss_mask(const TokenSeq& tokens, const SegmentBounds& bounds) {
  if (bounds.output_segments.empty()) {
    raise(ErrorCode::InconsistentBounds, "no output segments given");
  }
  if (bounds.eos_pos >= tokens.size() || tokens[bounds.eos_pos] != tok::kEos) {
    raise(ErrorCode::InconsistentBounds, "eos position does not hold [EOS]");
  }
  std::vector<std::uint8_t> mask(tokens.size(), 0);
  std::size_t prev_end = 0;
  for (const auto& [b, e] : bounds.output_segments) {
    if (b >= e || e > tokens.size() || b < prev_end) {
      raise(ErrorCode::InconsistentBounds, "output segments must be nonempty, ordered, in range");
    }
    prev_end = e;
    for (std::size_t i = b; i < e; ++i) mask[i] = 1;
  }
  mask[bounds.eos_pos] = 1;
  return mask;
}

TrainingEpisode build_training_episode(const std::vector<GridPair>& pairs,
                                       const Grid& test_input, const Grid& test_output,
                                       int max_ctx, std::optional<int> max_pairs,
                                       Order order) {
  EpisodePrefix prefix = fit_context(encode_episode(pairs, test_input, order), max_ctx, max_pairs);

  TrainingEpisode ep;
  ep.target_begin = prefix.tokens.size();
  ep.tokens = std::move(prefix.tokens);
  const TokenSeq target = encode_grid(test_output, order);
  ep.tokens.insert(ep.tokens.end(), target.begin(), target.end());
  ep.tokens.push_back(tok::kEos);

  SegmentBounds bounds;
  for (const EpisodePrefix::PairSpan& s : prefix.pairs) {
    bounds.output_segments.push_back({s.out_begin, s.out_end});
  }
  bounds.output_segments.push_back({ep.target_begin, ep.target_begin + target.size()});
  bounds.eos_pos = ep.tokens.size() - 1;
  ep.mask = loss_mask(ep.tokens, bounds);
  return ep;
}

}  // namespace arc
