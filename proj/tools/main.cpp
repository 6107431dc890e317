// tinyarc command-line interface: train / solve / eval / inspect / augment.

#include <CLI11.hpp>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "arc/checkpoint.hpp"
#include "arc/harness.hpp"
#include "arc/rng.hpp"
#include "arc/train.hpp"

namespace {

using namespace arc;

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << v;
  return os.str();
}

void print_grid(const Grid& g, std::ostream& os) {
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) os << int(g.at(r, c)) << (c + 1 < g.width() ? " " : "");
    os << "\n";
  }
}

std::vector<StrategyKind> parse_strategies(const std::string& csv) {
  std::vector<StrategyKind> kinds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(parse_strategy(item));
  }
  if (kinds.empty()) raise(ErrorCode::NoStrategies, "no strategies in '" + csv + "'");
  return kinds;
}

int cmd_train(const std::string& tasks_path, const std::string& out_path, int steps,
              int batch, float lr, std::uint64_t seed, int views_per_task,
              const ModelConfig& cfg, int threads) {
  const TaskSet corpus = load_tasks(tasks_path);
  std::cout << "loaded " << corpus.size() << " tasks; training "
            << count_params(cfg) << " parameters for " << steps << " steps\n";
  TrainHyper hyper;
  hyper.steps = steps;
  hyper.batch_size = batch;
  hyper.peak_lr = lr;
  hyper.views_per_task = views_per_task;
  hyper.threads = threads;
  const TrainResult result = pretrain(corpus, cfg, hyper, seed, &std::cout);
  save_checkpoint(out_path, result.params, cfg);
  std::cout << "checkpoint written to " << out_path << " (fingerprint "
            << hex64(params_fingerprint(result.params)) << ")\n";
  return 0;
}

StrategyConfig make_strategy_config(int views, int ttt_steps, float ttt_lr, bool pipeline1,
                                    int attempts, const std::string& order, int max_new) {
  StrategyConfig cfg;
  cfg.views = views;
  cfg.ttt.steps = ttt_steps;
  cfg.ttt.learning_rate = ttt_lr;
  cfg.pipeline1 = pipeline1;
  cfg.attempts = attempts;
  if (order == "col") cfg.order = Order::ColMajor;
  if (max_new > 0) cfg.max_new = max_new;
  return cfg;
}

int cmd_solve(const std::string& ckpt_path, const std::string& task_path,
              const std::string& strategy, const StrategyConfig& scfg, std::uint64_t seed) {
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const TaskSet tasks = load_tasks(task_path);
  const TinyLmModel model(ckpt.params, ckpt.config);
  SolveContext ctx;
  ctx.model = &model;
  ctx.base_params = &ckpt.params;
  ctx.config = &ckpt.config;

  const StrategyKind kind = parse_strategy(strategy);
  for (const TaskRecord& t : tasks) {
    const std::uint64_t task_seed = seed ^ fnv1a64(t.id.data(), t.id.size());
    const TaskResult r = run_strategy(ctx, t, kind, scfg, task_seed);
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      const ItemResult& item = r.items[i];
      std::cout << t.id << " test[" << i << "] " << item_status_name(item.status);
      if (!item.failure.empty()) std::cout << " (" << item.failure << ")";
      std::cout << "\n";
      if (item.prediction) print_grid(*item.prediction, std::cout);
    }
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& tasks_path,
             const std::string& solutions_path, const std::string& strategies,
             const StrategyConfig& scfg, int parallelism, std::uint64_t seed,
             const std::string& out_path, const std::string& format) {
  const LoadedCheckpoint ckpt = load_checkpoint(ckpt_path);
  const TaskSet tasks = load_tasks(tasks_path, solutions_path);
  const TinyLmModel model(ckpt.params, ckpt.config);
  SolveContext ctx;
  ctx.model = &model;
  ctx.base_params = &ckpt.params;
  ctx.config = &ckpt.config;
  ctx.checkpoint_hash = hex64(params_fingerprint(ckpt.params));

  const EvalReport report =
      evaluate(ctx, tasks, parse_strategies(strategies), scfg, parallelism, seed);
  if (!out_path.empty()) {
    emit_report(report, out_path,
                format == "csv" ? ReportFormat::Csv : ReportFormat::Json);
    std::cout << "report written to " << out_path << "\n";
  } else {
    print_report_summary(report, std::cout);
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& task_path) {
  if (!ckpt_path.empty()) {
    const CheckpointInfo info = inspect_checkpoint(ckpt_path);
    const ModelConfig& c = info.config;
    std::cout << "checkpoint " << ckpt_path << "\n"
              << "  d_model " << c.d_model << ", heads " << c.n_heads << " x " << c.head_dim
              << ", layers " << c.n_layers << ", ffn " << c.d_ffn << ", ctx " << c.max_ctx
              << ", dropout " << c.dropout_rate << "\n"
              << "  vocab version " << info.vocab_version << ", parameters "
              << count_params(c) << "\n"
              << "  payload fingerprint " << hex64(info.payload_fingerprint) << "\n";
  }
  if (!task_path.empty()) {
    for (const TaskRecord& t : load_tasks(task_path)) {
      std::cout << "task " << t.id << ": " << t.train.size() << " train pair(s), "
                << t.test.size() << " test item(s)\n";
      for (std::size_t k = 0; k < t.train.size(); ++k) {
        std::cout << "train[" << k << "] input:\n";
        print_grid(t.train[k].input, std::cout);
        std::cout << "train[" << k << "] output:\n";
        print_grid(t.train[k].output, std::cout);
      }
      for (std::size_t k = 0; k < t.test.size(); ++k) {
        std::cout << "test[" << k << "] input:\n";
        print_grid(t.test[k].input, std::cout);
        if (t.test[k].output) {
          std::cout << "test[" << k << "] output:\n";
          print_grid(*t.test[k].output, std::cout);
        }
      }
    }
  }
  return 0;
}

int cmd_augment(const std::string& task_path, int budget, std::uint64_t seed) {
  for (const TaskRecord& t : load_tasks(task_path)) {
    const auto views = enumerate_views(t, budget, seed ^ fnv1a64(t.id.data(), t.id.size()));
    std::cout << t.id << ": " << views.size() << " view(s)\n";
    for (std::size_t i = 0; i < views.size(); ++i) {
      std::cout << "  [" << i << "] " << views[i].describe() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyarc: grid-puzzle solving with a small decoder-only transformer"};
  app.require_subcommand(1);

  // train
  std::string tr_tasks, tr_out = "tinyarc.ckpt";
  int tr_steps = 1000, tr_batch = 16, tr_views = 64, tr_threads = 0;
  float tr_lr = 3e-4f;
  std::uint64_t tr_seed = 0;
  ModelConfig tr_cfg;
  auto* train = app.add_subcommand("train", "pre-train a model on a task set");
  train->add_option("--tasks", tr_tasks, "task JSON file or directory")->required();
  train->add_option("--out-checkpoint", tr_out, "output checkpoint path");
  train->add_option("--steps", tr_steps, "optimizer steps");
  train->add_option("--batch", tr_batch, "episodes per step");
  train->add_option("--lr", tr_lr, "peak learning rate");
  train->add_option("--seed", tr_seed, "run seed");
  train->add_option("--views-per-task", tr_views, "augmentation views per task");
  train->add_option("--threads", tr_threads, "gradient worker threads (0 = auto)");
  train->add_option("--d-model", tr_cfg.d_model, "embedding width");
  train->add_option("--n-heads", tr_cfg.n_heads, "attention heads");
  train->add_option("--head-dim", tr_cfg.head_dim, "per-head width");
  train->add_option("--n-layers", tr_cfg.n_layers, "transformer layers");
  train->add_option("--d-ffn", tr_cfg.d_ffn, "feedforward width");
  train->add_option("--max-ctx", tr_cfg.max_ctx, "context window");
  train->add_option("--dropout", tr_cfg.dropout_rate, "dropout rate");

  // solve
  std::string so_ckpt, so_task, so_strategy = "baseline", so_order = "row";
  int so_views = 64, so_ttt_steps = 10, so_attempts = 1;
  float so_ttt_lr = 5e-5f;
  std::uint64_t so_seed = 0;
  bool so_pipeline1 = false;
  auto* solve = app.add_subcommand("solve", "run one strategy on one task file");
  solve->add_option("--checkpoint", so_ckpt)->required();
  solve->add_option("--task", so_task, "single-task JSON file")->required();
  solve->add_option("--strategy", so_strategy, "baseline|poe|ttt|ttt_poe");
  solve->add_option("--views", so_views, "view budget");
  solve->add_option("--ttt-steps", so_ttt_steps, "test-time training steps");
  solve->add_option("--ttt-lr", so_ttt_lr, "test-time training learning rate");
  solve->add_flag("--pipeline1", so_pipeline1, "best-view mode with 3-pair contexts");
  solve->add_option("--attempts", so_attempts, "1 or 2 (pass@2)");
  solve->add_option("--order", so_order, "row|col serialization order");
  solve->add_option("--seed", so_seed, "run seed");

  // eval
  std::string ev_ckpt, ev_tasks, ev_solutions, ev_strategies = "baseline", ev_out,
              ev_format = "json", ev_order = "row";
  int ev_views = 64, ev_parallelism = 1, ev_ttt_steps = 10, ev_attempts = 1;
  float ev_ttt_lr = 5e-5f;
  std::uint64_t ev_seed = 0;
  bool ev_pipeline1 = false;
  auto* eval = app.add_subcommand("eval", "evaluate strategies over a task set");
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--tasks", ev_tasks)->required();
  eval->add_option("--solutions", ev_solutions, "solutions JSON file");
  eval->add_option("--strategies", ev_strategies, "comma-separated strategy list");
  eval->add_option("--views", ev_views, "view budget");
  eval->add_option("--ttt-steps", ev_ttt_steps);
  eval->add_option("--ttt-lr", ev_ttt_lr);
  eval->add_option("--parallelism", ev_parallelism, "worker threads over tasks");
  eval->add_option("--seed", ev_seed, "run seed");
  eval->add_option("--out", ev_out, "report output path");
  eval->add_option("--format", ev_format, "json|csv");
  eval->add_flag("--pipeline1", ev_pipeline1);
  eval->add_option("--attempts", ev_attempts, "1 or 2 (pass@2)");
  eval->add_option("--order", ev_order, "row|col serialization order");

  // inspect
  std::string in_ckpt, in_task;
  auto* inspect = app.add_subcommand("inspect", "print checkpoint or task details");
  inspect->add_option("--checkpoint", in_ckpt);
  inspect->add_option("--task", in_task);

  // augment
  std::string au_task;
  int au_budget = 64;
  std::uint64_t au_seed = 0;
  auto* augment = app.add_subcommand("augment", "dump enumerated views for a task");
  augment->add_option("--task", au_task)->required();
  augment->add_option("--budget", au_budget);
  augment->add_option("--seed", au_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(tr_tasks, tr_out, tr_steps, tr_batch, tr_lr, tr_seed, tr_views,
                       tr_cfg, tr_threads);
    }
    if (solve->parsed()) {
      return cmd_solve(so_ckpt, so_task, so_strategy,
                       make_strategy_config(so_views, so_ttt_steps, so_ttt_lr, so_pipeline1,
                                            so_attempts, so_order),
                       so_seed);
    }
    if (eval->parsed()) {
      return cmd_eval(ev_ckpt, ev_tasks, ev_solutions, ev_strategies,
                      make_strategy_config(ev_views, ev_ttt_steps, ev_ttt_lr, ev_pipeline1,
                                           ev_attempts, ev_order),
                      ev_parallelism, ev_seed, ev_out, ev_format);
    }
    if (inspect->parsed()) {
      if (in_ckpt.empty() && in_task.empty()) {
        std::cerr << "inspect needs --checkpoint or --task\n";
        return 2;
      }
      return cmd_inspect(in_ckpt, in_task);
    }
    if (augment->parsed()) return cmd_augment(au_task, au_budget, au_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
