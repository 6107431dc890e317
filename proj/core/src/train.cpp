#include "arc/train.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <thread>

#include "arc/rng.hpp"
#include "arc/serializer.hpp"

namespace arc {
namespace {

// A trainable episode target: one test item or one held-out train pair.
struct TargetRef {
  std::size_t task;
  bool is_test;
  std::size_t index;
};

TrainingEpisode build_episode(const TaskRecord& task, const TargetRef& target, const View& view,
                              const ModelConfig& cfg, const TrainHyper& hyper) {
  const TaskRecord viewed = apply_view_to_task(view, task);
  std::vector<GridPair> context;
  const Grid* in = nullptr;
  const Grid* out = nullptr;
  if (target.is_test) {
    context = viewed.train;
    in = &viewed.test[target.index].input;
    out = &*viewed.test[target.index].output;
  } else {
    for (std::size_t k = 0; k < viewed.train.size(); ++k) {
      if (k != target.index) context.push_back(viewed.train[k]);
    }
    if (context.empty()) context.push_back(viewed.train[target.index]);
    in = &viewed.train[target.index].input;
    out = &viewed.train[target.index].output;
  }
  TrainingEpisode ep =
      build_training_episode(context, *in, *out, cfg.max_ctx, hyper.max_pairs);
  if (!hyper.mask_outputs_only) {
    std::fill(ep.mask.begin(), ep.mask.end(), std::uint8_t(1));
    ep.mask[0] = 0;  // position 0 is never predicted
  }
  return ep;
}

void scaled_accumulate(Params& total, const Params& part, float weight) {
  auto tt = tensor_table(total);
  const auto pt = tensor_table(part);
  for (std::size_t k = 0; k < tt.size(); ++k) {
    for (std::size_t i = 0; i < tt[k].size; ++i) {
      tt[k].data[i] += pt[k].data[i] * weight;
    }
  }
}

}  // namespace

TrainResult pretrain(const TaskSet& corpus, const ModelConfig& cfg, const TrainHyper& hyper,
                     std::uint64_t seed, std::ostream* log, const StopCheck& stop_check,
                     int check_every) {
  cfg.validate();
  if (corpus.empty()) raise(ErrorCode::NoTrainableEpisodes, "corpus is empty");
  if (hyper.steps < 1 || hyper.batch_size < 1) {
    raise(ErrorCode::InvalidConfig, "steps and batch_size must be positive");
  }

  // Enumerate views and legal targets per task; a target is kept only if
  // its identity-view episode fits the context window.
  std::vector<std::vector<View>> task_views(corpus.size());
  std::vector<TargetRef> targets;
  for (std::size_t ti = 0; ti < corpus.size(); ++ti) {
    const TaskRecord& t = corpus[ti];
    task_views[ti] =
        enumerate_views(t, hyper.views_per_task, splitmix64(seed ^ (0x7a5e + ti)),
                        hyper.fix_background);
    for (std::size_t i = 0; i < t.test.size(); ++i) {
      if (!t.test[i].output) continue;
      TargetRef ref{ti, true, i};
      try {
        build_episode(t, ref, View::identity(), cfg, hyper);
        targets.push_back(ref);
      } catch (const Error&) {
      }
    }
    if (hyper.include_loo_targets) {
      for (std::size_t k = 0; k < t.train.size(); ++k) {
        TargetRef ref{ti, false, k};
        try {
          build_episode(t, ref, View::identity(), cfg, hyper);
          targets.push_back(ref);
        } catch (const Error&) {
        }
      }
    }
  }
  if (targets.empty()) {
    raise(ErrorCode::NoTrainableEpisodes, "no episode fits the context window");
  }

  TrainResult result;
  result.params = init_model<float>(cfg, seed);
  OptState opt = OptState::init(cfg);
  OptHyper oh;
  oh.peak_lr = hyper.peak_lr;
  oh.warmup_steps = hyper.warmup_steps >= 0
                        ? hyper.warmup_steps
                        : std::max(1, hyper.steps / 50);
  oh.total_steps = hyper.steps;
  oh.weight_decay = hyper.weight_decay;
  oh.clip_norm = hyper.clip_norm;

  const unsigned hw = std::thread::hardware_concurrency();
  const int n_threads = hyper.threads > 0 ? hyper.threads
                                          : std::max(1u, hw == 0 ? 1u : hw);

  Rng rng(splitmix64(seed ^ 0x747261696e5f3031ULL));
  Params grad_total = Params::zeros(cfg);
  std::vector<TrainingEpisode> episodes(static_cast<std::size_t>(hyper.batch_size));
  std::vector<EpisodeBatchItem> items(static_cast<std::size_t>(hyper.batch_size));

  for (int step = 1; step <= hyper.steps; ++step) {
    for (int b = 0; b < hyper.batch_size; ++b) {
      // Rejection-sample a buildable episode; a view can overflow the
      // context even when the identity view fits.
      bool built = false;
      for (int attempt = 0; attempt < 100 && !built; ++attempt) {
        const TargetRef& target = targets[rng.next_below(targets.size())];
        const auto& views = task_views[target.task];
        const View& view = views[rng.next_below(views.size())];
        try {
          episodes[static_cast<std::size_t>(b)] =
              build_episode(corpus[target.task], target, view, cfg, hyper);
          built = true;
        } catch (const Error&) {
        }
      }
      if (!built) raise(ErrorCode::NoTrainableEpisodes, "episode sampling kept overflowing");
      auto& ep = episodes[static_cast<std::size_t>(b)];
      items[static_cast<std::size_t>(b)] = EpisodeBatchItem{
          ep.tokens, ep.mask,
          splitmix64(seed ^ splitmix64(0x9000 + std::uint64_t(step) * 131 + std::uint64_t(b)))};
    }

    double loss = 0.0;
    grad_total.set_zero();
    const int workers = std::min<int>(n_threads, hyper.batch_size);
    if (workers <= 1) {
      loss = grads<float>(cfg, result.params, items, grad_total, /*train_mode=*/true);
    } else {
      // Contiguous slices; worker partials reduced in fixed order so the
      // result is bit-identical run to run for a fixed thread count.
      std::vector<Params> partial(static_cast<std::size_t>(workers));
      std::vector<double> part_loss(static_cast<std::size_t>(workers), 0.0);
      std::vector<std::pair<int, int>> ranges(static_cast<std::size_t>(workers));
      const int base = hyper.batch_size / workers;
      const int extra = hyper.batch_size % workers;
      int begin = 0;
      for (int w = 0; w < workers; ++w) {
        const int len = base + (w < extra ? 1 : 0);
        ranges[static_cast<std::size_t>(w)] = {begin, begin + len};
        begin += len;
      }
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
          const auto [lo, hi] = ranges[static_cast<std::size_t>(w)];
          partial[static_cast<std::size_t>(w)] = Params::zeros(cfg);
          const std::span<const EpisodeBatchItem> slice(items.data() + lo,
                                                        static_cast<std::size_t>(hi - lo));
          part_loss[static_cast<std::size_t>(w)] =
              grads<float>(cfg, result.params, slice, partial[static_cast<std::size_t>(w)],
                           /*train_mode=*/true);
        });
      }
      for (auto& th : pool) th.join();
      for (int w = 0; w < workers; ++w) {
        const auto [lo, hi] = ranges[static_cast<std::size_t>(w)];
        const float weight = float(hi - lo) / float(hyper.batch_size);
        scaled_accumulate(grad_total, partial[static_cast<std::size_t>(w)], weight);
        loss += part_loss[static_cast<std::size_t>(w)] * double(weight);
      }
    }

    opt_step(result.params, grad_total, opt, oh);
    result.trace.push_back({step, loss, lr_at(oh, opt.step)});
    if (log != nullptr && (step % hyper.log_every == 0 || step == 1 || step == hyper.steps)) {
      (*log) << "step " << std::setw(6) << step << "  loss " << std::fixed
             << std::setprecision(4) << loss << "  lr " << std::scientific
             << std::setprecision(3) << lr_at(oh, opt.step) << std::defaultfloat << "\n";
    }
    if (stop_check && check_every > 0 && step % check_every == 0 &&
        stop_check(step, result.params)) {
      break;
    }
  }
  return result;
}

}  // namespace arc
