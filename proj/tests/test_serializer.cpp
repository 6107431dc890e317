#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arc/serializer.hpp"
#include "support/synthetic.hpp"

using namespace arc;

namespace {

ErrorCode decode_error(const TokenSeq& seq, Order order = Order::RowMajor) {
  try {
    decode_grid(seq, order);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected decode to reject the sequence");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("vocabulary layout is the fixed 46-token table") {
  const Vocab v = build_vocab();
  REQUIRE(v.names.size() == tok::kVocabSize);
  CHECK(v.id_of("[BOS]") == 0);
  CHECK(v.id_of("[EOS]") == 1);
  CHECK(v.id_of("[SEP_IO]") == 2);
  CHECK(v.id_of("[SEP_EX]") == 3);
  CHECK(v.id_of("[ROW]") == 4);
  CHECK(v.id_of("[PAD]") == 5);
  CHECK(tok::size_token(1) == 6);
  CHECK(tok::size_token(30) == 35);
  CHECK(tok::color_token(0) == 36);
  CHECK(tok::color_token(9) == 45);
  for (TokenId id = 0; id < tok::kVocabSize; ++id) {
    CHECK(v.id_of(v.name_of(id)) == id);
  }
}

TEST_CASE("encode_grid layout") {
  CHECK(encode_grid(validate_grid({{3}})) ==
        TokenSeq{tok::size_token(1), tok::size_token(1), tok::color_token(3)});
  CHECK(encode_grid(validate_grid({{1, 0}, {0, 2}})) ==
        TokenSeq{tok::size_token(2), tok::size_token(2), tok::color_token(1),
                 tok::color_token(0), tok::kRow, tok::color_token(0), tok::color_token(2)});
}

TEST_CASE("encode/decode round trip and length formula") {
  Rng rng(31337);
  for (int i = 0; i < 500; ++i) {
    const Grid g = testing::random_grid(rng);
    const TokenSeq seq = encode_grid(g);
    CHECK(seq.size() == 2 + std::size_t(g.height()) * g.width() + std::size_t(g.height()) - 1);
    CHECK(decode_grid(seq) == g);
    for (const TokenId t : seq) {
      CHECK(t >= 0);
      CHECK(t < tok::kVocabSize);
      CHECK(t != tok::kPad);
    }
    // column-major variant round-trips as well
    const TokenSeq cm = encode_grid(g, Order::ColMajor);
    CHECK(cm.size() == 2 + std::size_t(g.height()) * g.width() + std::size_t(g.width()) - 1);
    CHECK(decode_grid(cm, Order::ColMajor) == g);
  }
  CHECK(encode_grid(Grid::filled(30, 30, 1)).size() == kMaxGridEncodingLen);
  CHECK(kMaxGridEncodingLen == 931);
}

TEST_CASE("strict decode rejections") {
  const TokenId s1 = tok::size_token(1), s2 = tok::size_token(2);
  const TokenId c0 = tok::color_token(0), c3 = tok::color_token(3);

  CHECK(decode_grid(TokenSeq{s1, s1, c3}) == validate_grid({{3}}));
  CHECK(decode_error({}) == ErrorCode::BadHeader);
  CHECK(decode_error({s1}) == ErrorCode::BadHeader);
  CHECK(decode_error({c0, s1, c3}) == ErrorCode::BadHeader);
  CHECK(decode_error({tok::kBos, s1, c3}) == ErrorCode::BadHeader);
  CHECK(decode_error({s2, s1, c0}) == ErrorCode::Truncated);
  CHECK(decode_error({s1, s2, c0}) == ErrorCode::Truncated);
  CHECK(decode_error({s1, s1, c3, c3}) == ErrorCode::TrailingTokens);
  CHECK(decode_error({s1, s1, c3, tok::kRow}) == ErrorCode::RowCountMismatch);
  CHECK(decode_error({s1, s2, c0, tok::kRow}) == ErrorCode::RowLengthMismatch);
  CHECK(decode_error({s2, s1, c0, c0, tok::kRow, c0}) == ErrorCode::RowLengthMismatch);
  CHECK(decode_error({s1, s1, tok::kEos}) == ErrorCode::UnexpectedToken);
  CHECK(decode_error({s2, s1, c0, tok::kSepIo, c0}) == ErrorCode::UnexpectedToken);
  CHECK(decode_error({s1, s2, c0, 99}) == ErrorCode::UnexpectedToken);
}

TEST_CASE("seeded mutations are always rejected with a decode error") {
  Rng rng(777);
  int checked = 0;
  while (checked < 300) {
    const Grid g = testing::random_grid(rng, 8, 8);
    TokenSeq seq = encode_grid(g);
    const int kind = rng.next_int(0, 2);
    if (kind == 0) {
      seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(rng.next_below(seq.size())));
    } else if (kind == 1) {
      seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(rng.next_below(seq.size() + 1)),
                 static_cast<TokenId>(rng.next_below(tok::kVocabSize)));
    } else {
      const std::size_t pos = rng.next_below(seq.size());
      const TokenId repl = static_cast<TokenId>(rng.next_below(tok::kVocabSize));
      if (seq[pos] == repl) continue;
      seq[pos] = repl;
    }
    try {
      const Grid out = decode_grid(seq);
      // a mutation may still be a valid encoding of a different grid
      // (e.g. substituting one color for another); it must differ
      CHECK(out != g);
    } catch (const Error& e) {
      const ErrorCode c = e.code();
      const bool decode_kind =
          c == ErrorCode::BadHeader || c == ErrorCode::RowLengthMismatch ||
          c == ErrorCode::RowCountMismatch || c == ErrorCode::UnexpectedToken ||
          c == ErrorCode::TrailingTokens || c == ErrorCode::Truncated;
      CHECK(decode_kind);
    }
    ++checked;
  }
}

TEST_CASE("encode_episode layout") {
  const Grid in = validate_grid({{1}});
  const Grid out = validate_grid({{2}});
  const EpisodePrefix ep = encode_episode({{in, out}}, in);
  const TokenId s1 = tok::size_token(1);
  CHECK(ep.tokens == TokenSeq{tok::kBos, s1, s1, tok::color_token(1), tok::kSepIo, s1, s1,
                              tok::color_token(2), tok::kSepEx, s1, s1, tok::color_token(1),
                              tok::kSepIo});
  REQUIRE(ep.pairs.size() == 1);
  CHECK(ep.pairs[0].begin == 1);
  CHECK(ep.pairs[0].end == 9);
  CHECK(ep.pairs[0].out_begin == 5);
  CHECK(ep.pairs[0].out_end == 8);
}

TEST_CASE("episode prefix length formula") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int hw = rng.next_int(1, 4);
    const Grid g = Grid::filled(hw, hw, 1);
    const std::size_t G = encode_grid(g).size();
    const int K = rng.next_int(1, 4);
    std::vector<GridPair> pairs(static_cast<std::size_t>(K), GridPair{g, g});
    const EpisodePrefix ep = encode_episode(pairs, g);
    CHECK(ep.tokens.size() == 1 + std::size_t(K) * (2 * G + 2) + G + 1);
  }
}

TEST_CASE("episode grid segments re-decode to the source grids") {
  const TaskRecord t = testing::make_family_task(testing::RuleKind::HFlip, 99, "t");
  const EpisodePrefix ep = encode_episode(t.train, t.test[0].input);
  // split on separators and decode each segment
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t begin = 1;  // after BOS
  for (std::size_t i = 1; i < ep.tokens.size(); ++i) {
    if (ep.tokens[i] == tok::kSepIo || ep.tokens[i] == tok::kSepEx) {
      segments.push_back({begin, i});
      begin = i + 1;
    }
  }
  REQUIRE(segments.size() == 2 * t.train.size() + 1);
  for (std::size_t k = 0; k < t.train.size(); ++k) {
    const auto [ib, ie] = segments[2 * k];
    const auto [ob, oe] = segments[2 * k + 1];
    CHECK(decode_grid(std::span<const TokenId>(ep.tokens.data() + ib, ie - ib)) ==
          t.train[k].input);
    CHECK(decode_grid(std::span<const TokenId>(ep.tokens.data() + ob, oe - ob)) ==
          t.train[k].output);
  }
  const auto [tb, te] = segments.back();
  CHECK(decode_grid(std::span<const TokenId>(ep.tokens.data() + tb, te - tb)) ==
        t.test[0].input);
}

TEST_CASE("fit_context keeps short episodes and drops oldest pairs") {
  const Grid small = validate_grid({{1}});
  const EpisodePrefix ep = encode_episode({{small, small}}, small);
  const EpisodePrefix kept = fit_context(ep, kDefaultMaxCtx);
  CHECK(kept.tokens == ep.tokens);

  // three 4x4 pairs at a tight budget: earliest pairs drop, structure intact
  const Grid g4 = Grid::filled(4, 4, 2);
  const Grid mark = Grid::filled(4, 4, 3);
  std::vector<GridPair> pairs{{g4, g4}, {mark, mark}, {g4, mark}};
  const EpisodePrefix full = encode_episode(pairs, g4);
  const std::size_t pair_len = full.pairs[0].end - full.pairs[0].begin;
  const int max_ctx = static_cast<int>(full.tokens.size() - pair_len + kMaxTargetLen);
  const EpisodePrefix trimmed = fit_context(full, max_ctx);
  REQUIRE(trimmed.n_pairs() == 2);
  CHECK(trimmed.tokens.size() == full.tokens.size() - pair_len);
  CHECK(trimmed.tokens[0] == tok::kBos);
  // surviving pairs are the latest two, segments still decode
  const auto& s0 = trimmed.pairs[0];
  CHECK(decode_grid(std::span<const TokenId>(trimmed.tokens.data() + s0.out_begin,
                                             s0.out_end - s0.out_begin)) == mark);

  // pair cap drops from the front as well
  const EpisodePrefix capped = fit_context(full, kDefaultMaxCtx, 1);
  REQUIRE(capped.n_pairs() == 1);
  CHECK(decode_grid(std::span<const TokenId>(
            capped.tokens.data() + capped.pairs[0].out_begin,
            capped.pairs[0].out_end - capped.pairs[0].out_begin)) == mark);

  // even a pair-free prefix cannot fit: ContextOverflow
  try {
    fit_context(full, 40);
    FAIL("expected ContextOverflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ContextOverflow);
  }
}

TEST_CASE("loss_mask covers output grids plus EOS") {
  const Grid in = validate_grid({{1}});
  const Grid out = validate_grid({{2}});
  const TrainingEpisode ep = build_training_episode({{in, out}}, in, out);
  // prefix: BOS in SEP_IO out SEP_EX test SEP_IO = 13 tokens, then target 3 + EOS
  REQUIRE(ep.tokens.size() == 17);
  CHECK(ep.target_begin == 13);
  std::size_t on = 0;
  for (const auto b : ep.mask) on += b;
  CHECK(on == 3 + 3 + 1);  // demo output + target + EOS
  CHECK(ep.mask[0] == 0);                      // BOS
  CHECK(ep.mask[5] == 1);                      // demo output tokens
  CHECK(ep.mask[8] == 0);                      // SEP_EX
  CHECK(ep.mask[ep.tokens.size() - 1] == 1);   // EOS
  CHECK(ep.tokens[ep.tokens.size() - 1] == tok::kEos);

  SUBCASE("inconsistent bounds are rejected") {
    SegmentBounds empty;
    empty.eos_pos = ep.tokens.size() - 1;
    CHECK_THROWS_AS((void)loss_mask(ep.tokens, empty), Error);
    SegmentBounds bad;
    bad.output_segments = {{5, 8}};
    bad.eos_pos = 0;  // BOS, not EOS
    CHECK_THROWS_AS((void)loss_mask(ep.tokens, bad), Error);
  }
}

TEST_CASE("mask cardinality equals output lengths plus one") {
  Rng rng(4242);
  for (int trial = 0; trial < 30; ++trial) {
    const TaskRecord t = testing::make_family_task(
        static_cast<testing::RuleKind>(trial % 3), 1000 + std::uint64_t(trial), "t");
    const TrainingEpisode ep =
        build_training_episode(t.train, t.test[0].input, *t.test[0].output);
    std::size_t expect = encode_grid(*t.test[0].output).size() + 1;
    for (const GridPair& p : t.train) expect += encode_grid(p.output).size();
    std::size_t on = 0;
    for (const auto b : ep.mask) on += b;
    CHECK(on == expect);
  }
}
