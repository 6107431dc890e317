#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "arc/tinylm.hpp"
#include "support/synthetic.hpp"

using namespace arc;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.head_dim = 8;
  cfg.n_layers = 2;
  cfg.d_ffn = 64;
  cfg.max_ctx = 32;
  cfg.dropout_rate = 0.1f;
  return cfg;
}

struct Problem {
  TokenSeq tokens;
  std::vector<std::uint8_t> mask;
  bool train_mode = false;
  std::uint64_t dropout_seed = 0;
};

Problem make_problem(std::uint64_t seed, int len) {
  Rng rng(seed);
  Problem pr;
  pr.tokens.resize(static_cast<std::size_t>(len));
  pr.mask.resize(static_cast<std::size_t>(len), 0);
  for (auto& t : pr.tokens) t = static_cast<TokenId>(rng.next_below(tok::kVocabSize));
  for (std::size_t j = 1; j < pr.mask.size(); ++j) {
    pr.mask[j] = rng.next_unit() < 0.6 ? 1 : 0;
  }
  pr.mask[pr.mask.size() - 1] = 1;  // at least one target
  return pr;
}

double loss_of(const ModelConfig& cfg, const ParamsT<double>& p, const Problem& pr,
               const AdapterSet<double>* ad = nullptr) {
  const ForwardOptions opts{pr.train_mode, pr.dropout_seed};
  const MatX<double> logits = forward<double>(cfg, p, pr.tokens, opts, ad);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t j = 1; j < pr.tokens.size(); ++j) {
    if (!pr.mask[j]) continue;
    const auto row = static_cast<Eigen::Index>(j - 1);
    double mx = -1e300;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) mx = std::max(mx, logits(row, k));
    double lse = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) lse += std::exp(logits(row, k) - mx);
    sum += mx + std::log(lse) - logits(row, pr.tokens[j]);
    ++n;
  }
  return sum / double(n);
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Central finite differences against analytic gradients over sampled
// coordinates of every tensor. Step pinned at 1e-4.
void check_gradients(const ModelConfig& cfg, ParamsT<double>& p, const Problem& pr,
                     int per_tensor, double tol) {
  ParamsT<double> g = ParamsT<double>::zeros(cfg);
  const std::vector<EpisodeBatchItem> batch{{pr.tokens, pr.mask, pr.dropout_seed}};
  (void)grads<double>(cfg, p, batch, g, pr.train_mode);

  const double h = 1e-4;
  Rng rng(4321);
  auto pt = tensor_table(p);
  const auto gt = tensor_table(std::as_const(g));
  int checked = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < pt.size(); ++k) {
    for (int s = 0; s < per_tensor; ++s) {
      const std::size_t i = rng.next_below(pt[k].size);
      // skip positional rows beyond the sequence; their gradient is
      // exactly zero on both sides
      const double keep = pt[k].data[i];
      pt[k].data[i] = keep + h;
      const double up = loss_of(cfg, p, pr);
      pt[k].data[i] = keep - h;
      const double down = loss_of(cfg, p, pr);
      pt[k].data[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = gt[k].data[i];
      if (fd == 0.0 && an == 0.0) {
        ++checked;
        continue;
      }
      const double err = rel_err(an, fd);
      worst = std::max(worst, err);
      INFO(pt[k].name, "[", i, "] analytic=", an, " fd=", fd);
      CHECK(err < tol);
      ++checked;
    }
  }
  CHECK(checked >= per_tensor * static_cast<int>(pt.size()));
  MESSAGE("worst relative error: ", worst, " over ", checked, " coordinates");
}

}  // namespace

TEST_CASE("analytic gradients match finite differences (dropout off)") {
  const ModelConfig cfg = tiny_config();
  ParamsT<double> p = init_model<double>(cfg, 20250607);
  const Problem pr = make_problem(555, 12);
  // 7 samples x 35 tensors = 245 coordinates spanning every role
  check_gradients(cfg, p, pr, 7, 1e-4);
}

TEST_CASE("analytic gradients match finite differences (dropout on)") {
  const ModelConfig cfg = tiny_config();
  ParamsT<double> p = init_model<double>(cfg, 31);
  Problem pr = make_problem(777, 10);
  pr.train_mode = true;
  pr.dropout_seed = 99;
  check_gradients(cfg, p, pr, 3, 1e-4);
}

TEST_CASE("adapter gradients match finite differences") {
  const ModelConfig cfg = tiny_config();
  const ParamsT<double> p = init_model<double>(cfg, 62);
  const Problem pr = make_problem(888, 10);

  AdapterSet<double> ad;
  ad.scale = 2.0;
  ad.dropout_rate = 0.0;
  Rng rng(5150);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (const AdapterTarget t : {AdapterTarget::AttnQ, AdapterTarget::AttnV}) {
      AdapterSet<double>::Entry e;
      e.target = t;
      e.layer = l;
      e.a.resize(4, cfg.d_model);
      e.b.resize(cfg.d_model, 4);
      for (Eigen::Index i = 0; i < e.a.size(); ++i) e.a.data()[i] = rng.next_normal() * 0.05;
      for (Eigen::Index i = 0; i < e.b.size(); ++i) e.b.data()[i] = rng.next_normal() * 0.05;
      ad.entries.push_back(std::move(e));
    }
  }

  ParamsT<double> g = ParamsT<double>::zeros(cfg);
  AdapterSet<double> ag = ad;
  for (auto& e : ag.entries) {
    e.a.setZero();
    e.b.setZero();
  }
  const std::vector<EpisodeBatchItem> batch{{pr.tokens, pr.mask, 0}};
  (void)grads<double>(cfg, p, batch, g, false, &ad, &ag);

  const double h = 1e-4;
  for (std::size_t n = 0; n < ad.entries.size(); ++n) {
    auto& e = ad.entries[n];
    for (auto* mat : {&e.a, &e.b}) {
      const bool is_a = mat == &e.a;
      for (int s = 0; s < 4; ++s) {
        const std::size_t i = rng.next_below(static_cast<std::size_t>(mat->size()));
        const double keep = mat->data()[i];
        mat->data()[i] = keep + h;
        const double up = loss_of(cfg, p, pr, &ad);
        mat->data()[i] = keep - h;
        const double down = loss_of(cfg, p, pr, &ad);
        mat->data()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double an = is_a ? ag.entries[n].a.data()[i] : ag.entries[n].b.data()[i];
        if (fd == 0.0 && an == 0.0) continue;
        CHECK(rel_err(an, fd) < 1e-4);
      }
    }
  }
}
