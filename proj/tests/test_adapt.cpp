#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "arc/adapt.hpp"
#include "support/synthetic.hpp"

using namespace arc;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.head_dim = 16;
  cfg.n_layers = 2;
  cfg.d_ffn = 128;
  cfg.max_ctx = kDefaultMaxCtx;
  cfg.dropout_rate = 0.1f;
  return cfg;
}

TokenSeq random_tokens(Rng& rng, int n) {
  TokenSeq t(static_cast<std::size_t>(n));
  for (TokenId& x : t) x = static_cast<TokenId>(rng.next_below(tok::kVocabSize));
  return t;
}

}  // namespace

TEST_CASE("freshly attached adapters are an exact identity") {
  const ModelConfig cfg = micro_config();
  const Params base = init_model<float>(cfg, 1);
  const AdaptedModel m = attach_adapters(base, cfg, AdapterConfig{}, 2);

  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const TokenSeq tokens = random_tokens(rng, 20);
    const MatX<float> a = forward<float>(cfg, base, tokens);
    const MatX<float> b = forward<float>(cfg, base, tokens, {}, &m.adapters);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("adapter parameter count and unknown targets") {
  // default config: 8 layers x 2 targets x 2 factors x 8 x 448
  CHECK(count_adapter_params(ModelConfig{}, AdapterConfig{}) == 114'688);

  AdapterConfig bad;
  bad.targets = {"attn_q", "ffn_up"};
  try {
    bad.validate();
    FAIL("expected UnknownTarget");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownTarget);
  }
  CHECK_THROWS_AS((void)attach_adapters(init_model<float>(micro_config(), 1), micro_config(),
                                        bad, 0),
                  Error);
}

TEST_CASE("build_ttt_set counts and masks") {
  const TaskRecord t = testing::make_family_task(testing::RuleKind::Identity, 10, "t");
  REQUIRE(t.train.size() == 3);
  const auto views = enumerate_views(t, 8, 4);
  REQUIRE(views.size() == 8);

  const auto episodes = build_ttt_set(t, views, /*leave_one_out=*/true);
  CHECK(episodes.size() == 24);  // 3 pairs x 8 views

  // every episode's pseudo-test output is loss-masked on and appears once
  for (const auto& ep : episodes) {
    REQUIRE(ep.tokens.back() == tok::kEos);
    CHECK(ep.mask.back() == 1);
    for (std::size_t i = ep.target_begin; i + 1 < ep.tokens.size(); ++i) {
      CHECK(ep.mask[i] == 1);
    }
    // leave-one-out context holds the remaining two pairs
    std::size_t sep_ex = 0;
    for (const TokenId tk : ep.tokens) sep_ex += tk == tok::kSepEx ? 1 : 0;
    CHECK(sep_ex == 2);
  }

  // single-pair task: one self-episode per view
  TaskRecord single;
  single.id = "s";
  single.train.push_back(t.train[0]);
  single.test.push_back(t.test[0]);
  const auto self_eps = build_ttt_set(single, views, true);
  CHECK(self_eps.size() == views.size());

  // all-dropped set raises EmptyTTTSet
  try {
    (void)build_ttt_set(t, views, true, /*max_ctx=*/16);
    FAIL("expected EmptyTTTSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyTTTSet);
  }
}

TEST_CASE("ttt_run leaves base weights untouched and stops early on flat loss") {
  const ModelConfig cfg = micro_config();
  // w_out = 0 makes the loss exactly flat in the adapter factors
  Params base = Params::zeros(cfg);
  {
    const Params seed_params = init_model<float>(cfg, 5);
    base = seed_params;
    base.w_out.setZero();
  }
  const std::uint64_t base_hash = params_fingerprint(base);

  AdaptedModel m = attach_adapters(base, cfg, AdapterConfig{}, 6);
  const auto a0 = m.adapters.entries[0].a;

  const TaskRecord t = testing::make_family_task(testing::RuleKind::Identity, 20, "t");
  const auto episodes = build_ttt_set(t, enumerate_views(t, 4, 2), true, cfg.max_ctx);

  TTTConfig tcfg;
  tcfg.steps = 50;
  tcfg.eval_every = 2;
  tcfg.patience = 3;
  const TTTResult r = ttt_run(m, episodes, tcfg);

  CHECK(r.steps_run == tcfg.patience * tcfg.eval_every);
  CHECK(r.stopped_early);
  CHECK(r.trace.size() <= kMaxTTTSteps);
  CHECK(params_fingerprint(base) == base_hash);
  CHECK(m.adapters.entries[0].a == a0);  // factors unchanged
  CHECK(r.best_eval == doctest::Approx(std::log(46.0)).epsilon(1e-6));
}

TEST_CASE("ttt_run decreases demonstration loss on a learnable micro task") {
  const ModelConfig cfg = micro_config();
  const Params base = init_model<float>(cfg, 9);
  const std::uint64_t base_hash = params_fingerprint(base);

  int improved = 0;
  const int trials = 20;
  for (int i = 0; i < trials; ++i) {
    const TaskRecord t = testing::make_family_task(
        static_cast<testing::RuleKind>(i % 3), 300 + std::uint64_t(i), "t");
    AdaptedModel m = attach_adapters(base, cfg, AdapterConfig{}, 100 + std::uint64_t(i));
    const auto episodes = build_ttt_set(t, enumerate_views(t, 4, i), true, cfg.max_ctx);
    TTTConfig tcfg;
    tcfg.steps = 10;
    tcfg.learning_rate = 5e-5f;
    tcfg.seed = 7 + std::uint64_t(i);
    const TTTResult r = ttt_run(m, episodes, tcfg);
    if (r.best_eval < r.initial_eval) ++improved;

    // best-state return: the held factors reproduce the best eval loss
    double reeval;
    {
      AdaptedModel probe = std::move(m);
      const auto eps2 = episodes;
      // recompute demonstration loss with dropout off
      double sum = 0;
      for (const auto& ep : eps2) {
        const MatX<float> logits =
            forward<float>(cfg, probe.effective_params(), ep.tokens, {}, probe.adapter_ptr());
        double loss = 0;
        std::size_t n = 0;
        for (std::size_t j = 1; j < ep.tokens.size(); ++j) {
          if (!ep.mask[j]) continue;
          const auto row = static_cast<Eigen::Index>(j - 1);
          double mx = -1e300;
          for (Eigen::Index k = 0; k < logits.cols(); ++k) {
            mx = std::max(mx, double(logits(row, k)));
          }
          double lse = 0;
          for (Eigen::Index k = 0; k < logits.cols(); ++k) {
            lse += std::exp(double(logits(row, k)) - mx);
          }
          loss += mx + std::log(lse) - double(logits(row, ep.tokens[j]));
          ++n;
        }
        sum += loss / double(n);
      }
      reeval = sum / double(eps2.size());
    }
    CHECK(reeval == doctest::Approx(r.best_eval).epsilon(1e-6));
  }
  MESSAGE("demonstration loss improved on ", improved, "/", trials, " micro tasks");
  CHECK(improved >= trials * 9 / 10);
  CHECK(params_fingerprint(base) == base_hash);
}

TEST_CASE("merge_adapters folds factors into standalone weights") {
  const ModelConfig cfg = micro_config();
  const Params base = init_model<float>(cfg, 11);

  // merge of freshly attached adapters equals the base bit for bit
  AdaptedModel fresh = attach_adapters(base, cfg, AdapterConfig{}, 12);
  CHECK(params_fingerprint(merge_adapters(fresh)) == params_fingerprint(base));

  // after adaptation, merged forward matches adapted forward within 1e-5
  const TaskRecord t = testing::make_family_task(testing::RuleKind::ColorSwap, 21, "t");
  AdaptedModel m = attach_adapters(base, cfg, AdapterConfig{}, 13);
  TTTConfig tcfg;
  tcfg.steps = 6;
  tcfg.learning_rate = 1e-3f;  // move the factors measurably
  const auto episodes = build_ttt_set(t, enumerate_views(t, 4, 3), true, cfg.max_ctx);
  (void)ttt_run(m, episodes, tcfg);

  const Params merged = merge_adapters(m);
  Rng rng(14);
  float worst = 0.0f;
  for (int i = 0; i < 100; ++i) {
    const TokenSeq tokens = random_tokens(rng, 24);
    const MatX<float> a = forward<float>(cfg, base, tokens, {}, &m.adapters);
    const MatX<float> b = forward<float>(cfg, merged, tokens);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  MESSAGE("max |adapted - merged| logit difference: ", worst);
  CHECK(worst < 1e-5f);
}

TEST_CASE("full finetune mode updates a private copy") {
  const ModelConfig cfg = micro_config();
  const Params base = init_model<float>(cfg, 15);
  const std::uint64_t base_hash = params_fingerprint(base);

  const TaskRecord t = testing::make_family_task(testing::RuleKind::Identity, 31, "t");
  AdaptedModel m = attach_adapters(base, cfg, AdapterConfig{}, 16);
  TTTConfig tcfg;
  tcfg.steps = 4;
  tcfg.full_finetune = true;
  tcfg.learning_rate = 1e-3f;
  const auto episodes = build_ttt_set(t, enumerate_views(t, 2, 3), true, cfg.max_ctx);
  (void)ttt_run(m, episodes, tcfg);

  CHECK(params_fingerprint(base) == base_hash);
  REQUIRE(m.finetuned.has_value());
  CHECK(params_fingerprint(*m.finetuned) != base_hash);
  CHECK(params_fingerprint(merge_adapters(m)) == params_fingerprint(*m.finetuned));
}
