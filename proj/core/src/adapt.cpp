#include "arc/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "arc/rng.hpp"
#include "arc/serializer.hpp"

namespace arc {
namespace {

double mean_demo_loss(const AdaptedModel& m, const std::vector<TrainingEpisode>& episodes) {
  double sum = 0.0;
  for (const TrainingEpisode& ep : episodes) {
    const MatX<float> logits =
        forward<float>(m.config, m.effective_params(), ep.tokens, {}, m.adapter_ptr());
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 1; j < ep.tokens.size(); ++j) {
      if (!ep.mask[j]) continue;
      const auto row = static_cast<Eigen::Index>(j - 1);
      double mx = -1e300;
      for (Eigen::Index k = 0; k < logits.cols(); ++k) mx = std::max(mx, double(logits(row, k)));
      double lse = 0.0;
      for (Eigen::Index k = 0; k < logits.cols(); ++k) {
        lse += std::exp(double(logits(row, k)) - mx);
      }
      loss += mx + std::log(lse) - double(logits(row, ep.tokens[j]));
      ++n;
    }
    sum += loss / double(n);
  }
  return sum / double(episodes.size());
}

struct FactorSnapshot {
  std::vector<std::pair<MatX<float>, MatX<float>>> factors;  // (a, b) per entry
  std::optional<Params> finetuned;
};

FactorSnapshot snapshot(const AdaptedModel& m) {
  FactorSnapshot s;
  for (const auto& e : m.adapters.entries) s.factors.push_back({e.a, e.b});
  s.finetuned = m.finetuned;
  return s;
}

void restore(AdaptedModel& m, const FactorSnapshot& s) {
  for (std::size_t i = 0; i < m.adapters.entries.size(); ++i) {
    m.adapters.entries[i].a = s.factors[i].first;
    m.adapters.entries[i].b = s.factors[i].second;
  }
  m.finetuned = s.finetuned;
}

}  // namespace

void AdapterConfig::validate() const {
  if (rank < 1) raise(ErrorCode::InvalidConfig, "adapter rank must be >= 1");
  if (!(alpha > 0.0f)) raise(ErrorCode::InvalidConfig, "adapter alpha must be > 0");
  if (!(dropout >= 0.0f && dropout < 1.0f)) {
    raise(ErrorCode::InvalidConfig, "adapter dropout must lie in [0,1)");
  }
  if (targets.empty()) raise(ErrorCode::InvalidConfig, "adapter target list is empty");
  for (const std::string& t : targets) parse_adapter_target(t);
}

void TTTConfig::validate() const {
  if (steps < 1 || steps > kMaxTTTSteps) {
    raise(ErrorCode::InvalidConfig,
          "ttt steps must lie in [1," + std::to_string(kMaxTTTSteps) + "]");
  }
  if (!(learning_rate > 0.0f)) raise(ErrorCode::InvalidConfig, "ttt learning rate must be > 0");
  if (patience < 1 || eval_every < 1) {
    raise(ErrorCode::InvalidConfig, "patience and eval_every must be >= 1");
  }
}

AdapterTarget parse_adapter_target(const std::string& name) {
  if (name == "attn_q") return AdapterTarget::AttnQ;
  if (name == "attn_k") return AdapterTarget::AttnK;
  if (name == "attn_v") return AdapterTarget::AttnV;
  if (name == "attn_o") return AdapterTarget::AttnO;
  raise(ErrorCode::UnknownTarget, "no adapter target named '" + name + "'");
}

AdaptedModel attach_adapters(const Params& base, const ModelConfig& cfg,
                             const AdapterConfig& acfg, std::uint64_t seed) {
  acfg.validate();
  cfg.validate();
  std::set<AdapterTarget> targets;
  for (const std::string& name : acfg.targets) targets.insert(parse_adapter_target(name));

  AdaptedModel m;
  m.base = &base;
  m.config = cfg;
  m.adapter_config = acfg;
  m.adapters.scale = acfg.alpha / float(acfg.rank);
  m.adapters.dropout_rate = acfg.dropout;

  Rng rng(seed);
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (const AdapterTarget t : targets) {
      AdapterSet<float>::Entry e;
      e.target = t;
      e.layer = l;
      e.a = MatX<float>::Zero(acfg.rank, cfg.d_model);
      for (Eigen::Index i = 0; i < e.a.size(); ++i) {
        e.a.data()[i] = float(rng.next_normal() * 0.02);
      }
      e.b = MatX<float>::Zero(cfg.d_model, acfg.rank);
      m.adapters.entries.push_back(std::move(e));
    }
  }
  return m;
}

std::int64_t count_adapter_params(const ModelConfig& cfg, const AdapterConfig& acfg) {
  acfg.validate();
  std::set<AdapterTarget> targets;
  for (const std::string& name : acfg.targets) targets.insert(parse_adapter_target(name));
  return std::int64_t(cfg.n_layers) * std::int64_t(targets.size()) * 2 * acfg.rank *
         cfg.d_model;
}

std::vector<TrainingEpisode> build_ttt_set(const TaskRecord& t, const std::vector<View>& views,
                                           bool leave_one_out, int max_ctx,
                                           std::optional<int> max_pairs) {
  if (t.train.empty()) raise(ErrorCode::InvalidConfig, "task has no demonstration pairs");
  std::vector<TrainingEpisode> episodes;
  for (const View& v : views) {
    const TaskRecord viewed = apply_view_to_task(v, t);
    const std::size_t n = viewed.train.size();
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<GridPair> context;
      if (leave_one_out && n >= 2) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j != k) context.push_back(viewed.train[j]);
        }
      } else {
        context = viewed.train;
      }
      try {
        episodes.push_back(build_training_episode(context, viewed.train[k].input,
                                                  viewed.train[k].output, max_ctx, max_pairs));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ContextOverflow) throw;
      }
    }
  }
  if (episodes.empty()) {
    raise(ErrorCode::EmptyTTTSet, "every leave-one-out episode overflowed the context");
  }
  return episodes;
}

TTTResult ttt_run(AdaptedModel& m, const std::vector<TrainingEpisode>& episodes,
                  const TTTConfig& tcfg) {
  tcfg.validate();
  if (episodes.empty()) raise(ErrorCode::EmptyTTTSet, "no episodes to adapt on");
  if (tcfg.full_finetune && !m.finetuned) m.finetuned = *m.base;

  TTTResult result;
  result.initial_eval = mean_demo_loss(m, episodes);
  result.best_eval = result.initial_eval;
  double significant_level = result.initial_eval;
  FactorSnapshot best_state = snapshot(m);

  std::vector<EpisodeBatchItem> items(episodes.size());
  AdapterSet<float> agrads = m.adapters;  // same layout, zeroed each step
  Params base_grads = Params::zeros(m.config);

  int stall = 0;
  const float lr = tcfg.learning_rate;
  for (int step = 1; step <= tcfg.steps; ++step) {
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      items[i] = EpisodeBatchItem{
          episodes[i].tokens, episodes[i].mask,
          splitmix64(tcfg.seed ^ splitmix64(0x747474 + std::uint64_t(step) * 131 + i))};
    }
    double train_loss = 0.0;
    if (tcfg.full_finetune) {
      base_grads.set_zero();
      train_loss = grads<float>(m.config, *m.finetuned, items, base_grads, /*train_mode=*/true);
      auto pt = tensor_table(*m.finetuned);
      const auto gt = tensor_table(std::as_const(base_grads));
      for (std::size_t k = 0; k < pt.size(); ++k) {
        for (std::size_t i = 0; i < pt[k].size; ++i) {
          pt[k].data[i] -= lr * gt[k].data[i];
        }
      }
    } else {
      agrads.set_zero();
      base_grads.set_zero();
      train_loss = grads<float>(m.config, *m.base, items, base_grads, /*train_mode=*/true,
                                &m.adapters, &agrads);
      for (std::size_t k = 0; k < m.adapters.entries.size(); ++k) {
        m.adapters.entries[k].a -= lr * agrads.entries[k].a;
        m.adapters.entries[k].b -= lr * agrads.entries[k].b;
      }
    }
    result.trace.push_back({step, train_loss, std::nullopt});
    result.steps_run = step;

    if (step % tcfg.eval_every == 0) {
      const double eval = mean_demo_loss(m, episodes);
      result.trace.back().eval_loss = eval;
      // best-state tracking is strict; "gains stall" needs a material
      // improvement over the last significant level
      if (eval < result.best_eval) {
        result.best_eval = eval;
        best_state = snapshot(m);
      }
      if (eval < significant_level - tcfg.min_improvement) {
        significant_level = eval;
        stall = 0;
      } else {
        ++stall;
        if (stall >= tcfg.patience) {
          result.stopped_early = true;
          break;
        }
      }
    }
  }
  restore(m, best_state);
  return result;
}

Params merge_adapters(const AdaptedModel& m) {
  if (m.finetuned) return *m.finetuned;
  Params merged = *m.base;
  for (const auto& e : m.adapters.entries) {
    MatX<float> delta = (e.b * e.a) * m.adapters.scale;
    auto& ly = merged.layers[static_cast<std::size_t>(e.layer)];
    switch (e.target) {
      case AdapterTarget::AttnQ: ly.wq += delta; break;
      case AdapterTarget::AttnK: ly.wk += delta; break;
      case AdapterTarget::AttnV: ly.wv += delta; break;
      case AdapterTarget::AttnO: ly.wo += delta; break;
    }
  }
  return merged;
}

}  // namespace arc
