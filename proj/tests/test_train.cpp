#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "arc/train.hpp"
#include "support/synthetic.hpp"

using namespace arc;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.head_dim = 16;
  cfg.n_layers = 1;
  cfg.d_ffn = 128;
  cfg.max_ctx = kDefaultMaxCtx;
  cfg.dropout_rate = 0.05f;
  return cfg;
}

TrainHyper quick_hyper(int steps) {
  TrainHyper h;
  h.steps = steps;
  h.batch_size = 4;
  h.peak_lr = 3e-3f;
  h.views_per_task = 4;
  h.log_every = 1000;
  h.threads = 1;
  return h;
}

}  // namespace

TEST_CASE("pretrain rejects an empty or unusable corpus") {
  CHECK_THROWS_AS((void)pretrain({}, micro_config(), quick_hyper(1), 1), Error);

  // a context window too small for any episode
  ModelConfig cramped = micro_config();
  cramped.max_ctx = 8;
  const TaskSet corpus = testing::make_family_corpus(2, 9);
  try {
    (void)pretrain(corpus, cramped, quick_hyper(1), 1);
    FAIL("expected NoTrainableEpisodes");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoTrainableEpisodes);
  }
}

TEST_CASE("smoothed loss decreases on a small corpus") {
  const TaskSet corpus = testing::make_family_corpus(5, 77);
  const TrainResult r = pretrain(corpus, micro_config(), quick_hyper(200), 42);
  REQUIRE(r.trace.size() == 200);
  const auto mean_of = [&](std::size_t begin, std::size_t end) {
    double s = 0;
    for (std::size_t i = begin; i < end; ++i) s += r.trace[i].loss;
    return s / double(end - begin);
  };
  const double head = mean_of(0, 50);
  const double tail = mean_of(150, 200);
  MESSAGE("smoothed loss: first 50 = ", head, ", last 50 = ", tail);
  CHECK(tail < head);
}

TEST_CASE("fixed seed reproduces the loss trace exactly") {
  const TaskSet corpus = testing::make_family_corpus(3, 5);
  const TrainResult a = pretrain(corpus, micro_config(), quick_hyper(25), 7);
  const TrainResult b = pretrain(corpus, micro_config(), quick_hyper(25), 7);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss == b.trace[i].loss);  // bit identical
  }
  CHECK(params_fingerprint(a.params) == params_fingerprint(b.params));

  const TrainResult c = pretrain(corpus, micro_config(), quick_hyper(25), 8);
  CHECK(params_fingerprint(a.params) != params_fingerprint(c.params));
}
