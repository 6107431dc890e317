#include "arc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "arc/rng.hpp"

namespace arc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double round5(double x) { return std::round(x * 1e5) / 1e5; }

std::optional<int> effective_max_pairs(const StrategyConfig& cfg) {
  if (cfg.max_pairs) return cfg.max_pairs;
  if (cfg.pipeline1) return 3;
  return std::nullopt;
}

Grid greedy_predict(const Model& m, const TaskRecord& t, std::size_t test_index,
                    const View& v, const EnsembleOptions& opts) {
  const TaskRecord viewed = apply_view_to_task(v, t);
  const TokenSeq prefix = view_prefix(viewed, test_index, m.max_context(), opts);
  const TokenSeq gen = m.generate(prefix, opts.max_new);
  if (gen.empty() || gen.back() != tok::kEos) {
    raise(ErrorCode::Truncated, "generation ended without EOS");
  }
  const Grid decoded =
      decode_grid(std::span<const TokenId>(gen.data(), gen.size() - 1), opts.order);
  return apply_view(invert_view(v), decoded);
}

}  // namespace

const char* strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Baseline: return "baseline";
    case StrategyKind::PoE: return "poe";
    case StrategyKind::TTT: return "ttt";
    case StrategyKind::TTT_PoE: return "ttt_poe";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "baseline") return StrategyKind::Baseline;
  if (name == "poe") return StrategyKind::PoE;
  if (name == "ttt") return StrategyKind::TTT;
  if (name == "ttt_poe" || name == "ttt+poe") return StrategyKind::TTT_PoE;
  raise(ErrorCode::NoStrategies, "unknown strategy '" + name + "'");
}

const char* item_status_name(ItemStatus s) {
  switch (s) {
    case ItemStatus::Correct: return "correct";
    case ItemStatus::IncorrectValid: return "incorrect_valid";
    case ItemStatus::FailedGeneration: return "failed_generation";
  }
  return "?";
}

TaskResult run_strategy(const SolveContext& ctx, const TaskRecord& t, StrategyKind kind,
                        const StrategyConfig& cfg, std::uint64_t seed) {
  TaskResult result;
  result.task_id = t.id;
  result.strategy = kind;
  const auto task_start = Clock::now();

  const EnsembleOptions eopts{effective_max_pairs(cfg), cfg.order, cfg.max_new};
  const bool wants_ttt = kind == StrategyKind::TTT || kind == StrategyKind::TTT_PoE;
  const bool wants_poe = kind == StrategyKind::PoE || kind == StrategyKind::TTT_PoE;

  std::vector<View> views;
  std::string setup_failure;
  try {
    views = enumerate_views(t, cfg.views, seed, cfg.fix_background);
  } catch (const std::exception& e) {
    setup_failure = e.what();
  }

  // TTT adapts once per task; items share the adapted model.
  std::optional<TinyLmModel> adapted;
  const Model* model = ctx.model;
  if (setup_failure.empty() && wants_ttt) {
    if (ctx.base_params == nullptr || ctx.config == nullptr) {
      setup_failure = "TTT strategies need base parameters and a model config";
    } else {
      try {
        AdaptedModel am = attach_adapters(*ctx.base_params, *ctx.config, cfg.adapter,
                                          splitmix64(seed ^ 0xada9c0deULL));
        const auto episodes =
            build_ttt_set(t, views, /*leave_one_out=*/true, ctx.config->max_ctx,
                          eopts.max_pairs);
        TTTConfig tcfg = cfg.ttt;
        tcfg.seed = splitmix64(seed ^ 0x7474725fULL);
        ttt_run(am, episodes, tcfg);
        adapted.emplace(std::move(am));
        model = &*adapted;
      } catch (const std::exception& e) {
        setup_failure = e.what();
      }
    }
  }
  if (setup_failure.empty() && model == nullptr) {
    setup_failure = "no model in solve context";
  }

  for (std::size_t i = 0; i < t.test.size(); ++i) {
    ItemResult ir;
    ir.scored = t.test[i].output.has_value();
    const auto item_start = Clock::now();
    if (!setup_failure.empty()) {
      ir.status = ItemStatus::FailedGeneration;
      ir.failure = setup_failure;
      ir.wall_ms = ms_since(item_start);
      result.items.push_back(std::move(ir));
      continue;
    }
    try {
      std::vector<Grid> attempts;  // best-first, at most cfg.attempts
      if (!wants_poe) {
        View v = View::identity();
        if (cfg.pipeline1) v = best_view(*model, t, views, eopts);
        attempts.push_back(greedy_predict(*model, t, i, v, eopts));
      } else {
        const DemoFilterResult filt = demo_filter(*model, t, views, eopts);
        ProposeResult pr = propose(*model, t, i, filt.views, !filt.fallback, eopts);
        std::vector<Candidate> scored;
        std::string last_error = "no candidate could be scored";
        for (Candidate& c : pr.candidates) {
          try {
            poe_score(*model, t, i, filt.views, c, &pr.failures, eopts);
            scored.push_back(std::move(c));
          } catch (const Error& e) {
            last_error = e.what();
          }
        }
        if (scored.empty()) raise(ErrorCode::AllViewsSkipped, last_error);
        const auto ranked = rank_candidates(scored);
        const int k = std::max(1, cfg.attempts);
        for (std::size_t r = 0; r < ranked.size() && static_cast<int>(r) < k; ++r) {
          attempts.push_back(ranked[r]->grid);
        }
      }
      ir.prediction = attempts.front();
      if (ir.scored) {
        const Grid& truth = *t.test[i].output;
        const bool correct = std::any_of(attempts.begin(), attempts.end(),
                                         [&](const Grid& g) { return g == truth; });
        ir.status = correct ? ItemStatus::Correct : ItemStatus::IncorrectValid;
      } else {
        ir.status = ItemStatus::IncorrectValid;
      }
    } catch (const std::exception& e) {
      ir.status = ItemStatus::FailedGeneration;
      ir.failure = e.what();
    }
    ir.wall_ms = ms_since(item_start);
    result.items.push_back(std::move(ir));
  }
  result.wall_ms = ms_since(task_start);
  return result;
}

std::vector<StrategyAggregate> aggregate_results(const std::vector<TaskResult>& tasks) {
  std::vector<StrategyAggregate> out;
  const auto row = [&out](StrategyKind kind) -> StrategyAggregate& {
    const std::string name = strategy_name(kind);
    for (auto& a : out) {
      if (a.name == name) return a;
    }
    out.push_back(StrategyAggregate{});
    out.back().name = name;
    return out.back();
  };
  for (const TaskResult& tr : tasks) {
    StrategyAggregate& a = row(tr.strategy);
    a.n_tasks += 1;
    for (const ItemResult& ir : tr.items) {
      a.n_items += 1;
      if (ir.scored) a.n_scorable += 1;
      switch (ir.status) {
        case ItemStatus::Correct:
          a.n_correct += 1;
          a.n_valid += 1;
          break;
        case ItemStatus::IncorrectValid:
          a.n_valid += 1;
          break;
        case ItemStatus::FailedGeneration:
          a.n_failed += 1;
          break;
      }
    }
  }
  return out;
}

EvalReport evaluate(const SolveContext& ctx, const TaskSet& ts,
                    const std::vector<StrategyKind>& kinds, const StrategyConfig& cfg,
                    int parallelism, std::uint64_t seed) {
  if (kinds.empty()) raise(ErrorCode::NoStrategies, "no strategies requested");
  std::vector<const TaskRecord*> ordered;
  ordered.reserve(ts.size());
  for (const TaskRecord& t : ts) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const TaskRecord* a, const TaskRecord* b) { return a->id < b->id; });

  struct Job {
    StrategyKind kind;
    const TaskRecord* task;
  };
  std::vector<Job> jobs;
  for (const StrategyKind kind : kinds) {
    for (const TaskRecord* task : ordered) jobs.push_back({kind, task});
  }

  std::vector<TaskResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) break;
      const std::uint64_t task_seed =
          seed ^ fnv1a64(jobs[j].task->id.data(), jobs[j].task->id.size());
      results[j] = run_strategy(ctx, *jobs[j].task, jobs[j].kind, cfg, task_seed);
    }
  };
  const int n_threads = std::max(1, std::min<int>(parallelism, static_cast<int>(jobs.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  report.meta.checkpoint_hash = ctx.checkpoint_hash;
  report.meta.seed = seed;
  report.meta.views = cfg.views;
  report.meta.attempts = cfg.attempts;
  report.tasks = std::move(results);
  report.strategies = aggregate_results(report.tasks);
  return report;
}

// --- JSON ingestion ------------------------------------------------------

namespace {

Grid grid_from_json(const json& j, const std::string& task_id, const std::string& where) {
  if (!j.is_array()) {
    raise(ErrorCode::SchemaError, task_id + " " + where + ": grid must be an array of rows");
  }
  std::vector<std::vector<int>> rows;
  rows.reserve(j.size());
  for (const json& row : j) {
    if (!row.is_array()) {
      raise(ErrorCode::SchemaError, task_id + " " + where + ": row must be an array");
    }
    std::vector<int> r;
    r.reserve(row.size());
    for (const json& cell : row) {
      if (!cell.is_number_integer()) {
        raise(ErrorCode::SchemaError, task_id + " " + where + ": cell must be an integer");
      }
      r.push_back(cell.get<int>());
    }
    rows.push_back(std::move(r));
  }
  try {
    return validate_grid(rows);
  } catch (const Error& e) {
    raise(ErrorCode::GridValidationError, task_id + " " + where + ": " + e.what());
  }
}

TaskRecord task_from_json(const std::string& id, const json& j) {
  if (!j.is_object() || !j.contains("train") || !j.contains("test")) {
    raise(ErrorCode::SchemaError, id + ": task must hold 'train' and 'test' arrays");
  }
  const json& train = j.at("train");
  const json& test = j.at("test");
  if (!train.is_array() || train.empty() || !test.is_array() || test.empty()) {
    raise(ErrorCode::SchemaError, id + ": 'train' and 'test' must be nonempty arrays");
  }
  TaskRecord t;
  t.id = id;
  for (std::size_t k = 0; k < train.size(); ++k) {
    const json& pair = train[k];
    if (!pair.is_object() || !pair.contains("input") || !pair.contains("output")) {
      raise(ErrorCode::SchemaError, id + ": train[" + std::to_string(k) +
                                        "] must hold 'input' and 'output'");
    }
    const std::string where = "train[" + std::to_string(k) + "]";
    t.train.push_back({grid_from_json(pair.at("input"), id, where + ".input"),
                       grid_from_json(pair.at("output"), id, where + ".output")});
  }
  for (std::size_t k = 0; k < test.size(); ++k) {
    const json& item = test[k];
    if (!item.is_object() || !item.contains("input")) {
      raise(ErrorCode::SchemaError, id + ": test[" + std::to_string(k) + "] must hold 'input'");
    }
    const std::string where = "test[" + std::to_string(k) + "]";
    TestItem ti{grid_from_json(item.at("input"), id, where + ".input"), std::nullopt};
    if (item.contains("output") && !item.at("output").is_null()) {
      ti.output = grid_from_json(item.at("output"), id, where + ".output");
    }
    t.test.push_back(std::move(ti));
  }
  return t;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, path + ": " + e.what());
  }
}

}  // namespace

TaskSet load_tasks(const std::string& tasks_path, const std::string& solutions_path) {
  TaskSet out;
  if (fs::is_directory(tasks_path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(tasks_path)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) raise(ErrorCode::IoError, "no .json files in " + tasks_path);
    for (const fs::path& f : files) {
      out.push_back(task_from_json(f.stem().string(), parse_file(f.string())));
    }
  } else {
    const json j = parse_file(tasks_path);
    if (!j.is_object()) raise(ErrorCode::SchemaError, tasks_path + ": expected a JSON object");
    if (j.contains("train")) {
      out.push_back(task_from_json(fs::path(tasks_path).stem().string(), j));
    } else {
      for (const auto& [id, task] : j.items()) {
        out.push_back(task_from_json(id, task));
      }
    }
  }

  if (!solutions_path.empty()) {
    const json sols = parse_file(solutions_path);
    if (!sols.is_object()) {
      raise(ErrorCode::SchemaError, solutions_path + ": expected id -> grids object");
    }
    for (TaskRecord& t : out) {
      if (!sols.contains(t.id)) continue;  // stays unscorable
      const json& s = sols.at(t.id);
      if (!s.is_array() || s.size() != t.test.size()) {
        raise(ErrorCode::MissingSolution,
              t.id + ": solutions list " + std::to_string(s.is_array() ? s.size() : 0) +
                  " outputs for " + std::to_string(t.test.size()) + " test items");
      }
      for (std::size_t i = 0; i < t.test.size(); ++i) {
        t.test[i].output =
            grid_from_json(s[i], t.id, "solutions[" + std::to_string(i) + "]");
      }
    }
  }
  return out;
}

// --- report emission -----------------------------------------------------

std::string render_report_json(const EvalReport& r) {
  json j;
  j["meta"] = {{"checkpoint_hash", r.meta.checkpoint_hash},
               {"seed", r.meta.seed},
               {"views", r.meta.views},
               {"attempts", r.meta.attempts},
               {"unit", r.meta.unit}};
  json strategies = json::array();
  for (const StrategyAggregate& a : r.strategies) {
    strategies.push_back({{"name", a.name},
                          {"accuracy", round5(a.accuracy())},
                          {"valid_rate", round5(a.valid_rate())},
                          {"failed_rate", round5(a.failed_rate())},
                          {"n_tasks", a.n_tasks},
                          {"n_items", a.n_items},
                          {"n_scorable", a.n_scorable},
                          {"n_correct", a.n_correct},
                          {"n_valid", a.n_valid},
                          {"n_failed", a.n_failed}});
  }
  j["strategies"] = std::move(strategies);
  json tasks = json::array();
  for (const TaskResult& tr : r.tasks) {
    json items = json::array();
    for (const ItemResult& ir : tr.items) {
      json item = {{"status", item_status_name(ir.status)},
                   {"scored", ir.scored},
                   {"ms", std::round(ir.wall_ms * 1e3) / 1e3}};
      if (!ir.failure.empty()) item["failure"] = ir.failure;
      items.push_back(std::move(item));
    }
    tasks.push_back({{"id", tr.task_id},
                     {"strategy", strategy_name(tr.strategy)},
                     {"items", std::move(items)}});
  }
  j["tasks"] = std::move(tasks);
  return j.dump(2);
}

std::string render_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "name,accuracy,valid_rate,failed_rate,n_tasks,n_items\n";
  for (const StrategyAggregate& a : r.strategies) {
    os << a.name << ',' << std::fixed << std::setprecision(5) << a.accuracy() << ','
       << a.valid_rate() << ',' << a.failed_rate() << ',' << a.n_tasks << ',' << a.n_items
       << '\n';
  }
  return os.str();
}

void print_report_summary(const EvalReport& r, std::ostream& os) {
  os << std::left << std::setw(12) << "strategy" << std::right << std::setw(10) << "accuracy"
     << std::setw(10) << "valid" << std::setw(10) << "failed" << std::setw(8) << "items"
     << std::setw(8) << "tasks" << "\n";
  for (const StrategyAggregate& a : r.strategies) {
    std::ostringstream acc, val, fail;
    acc << std::fixed << std::setprecision(1) << a.accuracy() * 100.0 << '%';
    val << std::fixed << std::setprecision(1) << a.valid_rate() * 100.0 << '%';
    fail << std::fixed << std::setprecision(1) << a.failed_rate() * 100.0 << '%';
    os << std::left << std::setw(12) << a.name << std::right << std::setw(10) << acc.str()
       << std::setw(10) << val.str() << std::setw(10) << fail.str() << std::setw(8)
       << a.n_items << std::setw(8) << a.n_tasks << "\n";
  }
}

void emit_report(const EvalReport& r, const std::string& path, ReportFormat format) {
  const std::string body =
      format == ReportFormat::Json ? render_report_json(r) : render_report_csv(r);
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);
  out << body;
  if (format == ReportFormat::Json) out << '\n';
  if (!out) raise(ErrorCode::IoError, "write failed for " + path);
  print_report_summary(r, std::cout);
}

EvalReport parse_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
  EvalReport r;
  const json& meta = j.at("meta");
  r.meta.checkpoint_hash = meta.at("checkpoint_hash").get<std::string>();
  r.meta.seed = meta.at("seed").get<std::uint64_t>();
  r.meta.views = meta.at("views").get<int>();
  r.meta.attempts = meta.at("attempts").get<int>();
  r.meta.unit = meta.at("unit").get<std::string>();
  for (const json& s : j.at("strategies")) {
    StrategyAggregate a;
    a.name = s.at("name").get<std::string>();
    a.n_tasks = s.at("n_tasks").get<std::int64_t>();
    a.n_items = s.at("n_items").get<std::int64_t>();
    a.n_scorable = s.at("n_scorable").get<std::int64_t>();
    a.n_correct = s.at("n_correct").get<std::int64_t>();
    a.n_valid = s.at("n_valid").get<std::int64_t>();
    a.n_failed = s.at("n_failed").get<std::int64_t>();
    r.strategies.push_back(std::move(a));
  }
  for (const json& tj : j.at("tasks")) {
    TaskResult tr;
    tr.task_id = tj.at("id").get<std::string>();
    tr.strategy = parse_strategy(tj.at("strategy").get<std::string>());
    for (const json& ij : tj.at("items")) {
      ItemResult ir;
      const std::string status = ij.at("status").get<std::string>();
      if (status == "correct") {
        ir.status = ItemStatus::Correct;
      } else if (status == "incorrect_valid") {
        ir.status = ItemStatus::IncorrectValid;
      } else if (status == "failed_generation") {
        ir.status = ItemStatus::FailedGeneration;
      } else {
        raise(ErrorCode::SchemaError, "unknown item status '" + status + "'");
      }
      ir.scored = ij.at("scored").get<bool>();
      ir.wall_ms = ij.at("ms").get<double>();
      if (ij.contains("failure")) ir.failure = ij.at("failure").get<std::string>();
      tr.items.push_back(std::move(ir));
    }
    r.tasks.push_back(std::move(tr));
  }
  return r;
}

}  // namespace arc
