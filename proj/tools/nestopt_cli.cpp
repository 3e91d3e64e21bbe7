// Command-line surface: dataset generation, tuning, training, policy
// evaluation, and report aggregation.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nestopt/nestopt.hpp"

namespace fs = std::filesystem;
using namespace nestopt;

namespace {

struct MethodSpec {
  SearchConfig config;
  bool is_policy = false;
};

MethodSpec method_from_name(const std::string& name) {
  MethodSpec m;
  if (name == "greedy1") {
    m.config.method = SearchMethod::greedy;
    m.config.lookahead = 1;
  } else if (name == "greedy2") {
    m.config.method = SearchMethod::greedy;
    m.config.lookahead = 2;
  } else if (name == "beam2dfs" || name == "beam4dfs") {
    m.config.method = SearchMethod::beam_dfs;
    m.config.width = name == "beam2dfs" ? 2 : 4;
  } else if (name == "beam2bfs" || name == "beam4bfs") {
    m.config.method = SearchMethod::beam_bfs;
    m.config.width = name == "beam2bfs" ? 2 : 4;
  } else if (name == "random") {
    m.config.method = SearchMethod::random;
  } else if (name == "policy") {
    m.is_policy = true;
  } else {
    throw CLI::ValidationError("method", "unknown method '" + name + "'");
  }
  return m;
}

std::vector<ContractionSpec> pick_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train();
  if (split == "test") return ds.test();
  if (split == "all") return ds.benchmarks;
  throw CLI::ValidationError("split", "expected train, test or all");
}

void write_result_json(const fs::path& dir, const MethodResult& result) {
  fs::create_directories(dir);
  const fs::path file = dir / (result.benchmark + "__" + result.method + ".json");
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write '" + file.string() + "'");
  os << json(result).dump(2) << "\n";

  // per-step best-so-far trace, one CSV per run, for step plots
  std::ofstream trace(dir / (result.benchmark + "__" + result.method + ".trace.csv"));
  trace << "step,best_gflops,time_s\n";
  for (const auto& p : result.per_step_trace) {
    trace << p.step << ',' << p.best_gflops << ',' << p.time_s << '\n';
  }
}

MethodResult result_from_search(const SearchResult& sr, const std::string& bench,
                                const std::string& method, BackendKind backend) {
  MethodResult r;
  r.benchmark = bench;
  r.method = method;
  r.backend = backend_name(backend);
  r.best_gflops = sr.best_gflops;
  r.initial_gflops = sr.per_step_trace.empty() ? 0.0 : sr.per_step_trace.front().best_gflops;
  r.wall_time_s = sr.wall_time_s;
  r.evals = sr.evals;
  r.cache_hits = sr.cache_hits;
  r.nodes_expanded = sr.nodes_expanded;
  r.best_actions = sr.best_actions;
  r.per_step_trace = sr.per_step_trace;
  return r;
}

int cmd_gen(const std::string& out, std::uint64_t seed) {
  Dataset ds = generate_matmul_dataset(seed);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.benchmarks.size() << " benchmarks (" << ds.train_indices.size()
            << " train / " << ds.test_indices.size() << " test) to " << out << "\n";
  return 0;
}

int cmd_tune(const std::string& bench_file, const std::string& split, const std::string& method,
             double budget_s, int depth, const std::string& backend_name_str,
             const std::string& out_dir, std::uint64_t seed, const std::string& ckpt,
             int limit, int threads) {
  Dataset ds = load_dataset(bench_file);
  std::vector<ContractionSpec> specs = pick_split(ds, split);
  if (limit > 0 && static_cast<std::size_t>(limit) < specs.size()) {
    specs.resize(static_cast<std::size_t>(limit));
  }

  EvalConfig ecfg = EvalConfig::from_env();
  ecfg.backend =
      backend_name_str == "timed" ? BackendKind::timed : BackendKind::costmodel;

  MethodSpec m = method_from_name(method);
  m.config.budget_s = budget_s;
  m.config.depth = depth;
  m.config.seed = seed;

  QFunction q;
  if (m.is_policy) {
    if (ckpt.empty()) throw CLI::ValidationError("--ckpt", "policy method needs a checkpoint");
    q = make_q_function(Mlp<float>::load_file(ckpt));
  }

  auto tune_one = [&](Evaluator& ev, const ContractionSpec& spec) {
    SearchResult sr = m.is_policy ? rollout_policy(q, spec, ev)
                                  : run_search(lower(spec), m.config, ev);
    write_result_json(out_dir, result_from_search(sr, spec.name, method, ecfg.backend));
    return sr;
  };

  if (ecfg.backend == BackendKind::timed) {
    // timed evaluations demand exclusive use of the process: sequential
    TimedEvaluator ev(ecfg);
    ev.peak();
    for (const auto& spec : specs) {
      auto sr = tune_one(ev, spec);
      std::cout << spec.name << ": " << sr.best_gflops << " GFLOPS in " << sr.wall_time_s
                << " s (" << sr.evals << " evals)\n";
    }
  } else {
    const int workers = std::max(1, threads);
    std::atomic<std::size_t> next{0};
    std::mutex io;
    auto worker = [&] {
      CostModelEvaluator ev;
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= specs.size()) return;
        auto sr = tune_one(ev, specs[i]);
        std::lock_guard<std::mutex> lock(io);
        std::cout << specs[i].name << ": " << sr.best_gflops << " GFLOPS in " << sr.wall_time_s
                  << " s (" << sr.evals << " evals)\n";
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return 0;
}

TrainConfig parse_train_cfg(const std::string& path, std::string& split,
                            std::string& backend) {
  TrainConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "learning_rate") cfg.learning_rate = std::stod(val);
    else if (key == "gamma") cfg.gamma = std::stod(val);
    else if (key == "eps_start") cfg.eps_start = std::stod(val);
    else if (key == "eps_end") cfg.eps_end = std::stod(val);
    else if (key == "target_sync") cfg.target_sync = std::stoi(val);
    else if (key == "batch_size") cfg.batch_size = std::stoi(val);
    else if (key == "iterations") cfg.iterations = std::stoi(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "replay_capacity") cfg.replay_capacity = std::stoull(val);
    else if (key == "per_alpha") cfg.per_alpha = std::stod(val);
    else if (key == "per_beta") cfg.per_beta = std::stod(val);
    else if (key == "actors") cfg.actors = std::stoi(val);
    else if (key == "updates_per_iteration") cfg.updates_per_iteration = std::stoi(val);
    else if (key == "priority_offset") cfg.priority_offset = std::stod(val);
    else if (key == "split") split = val;
    else if (key == "backend") backend = val;
    else if (key == "hidden") {
      cfg.hidden.clear();
      std::istringstream hs(val);
      std::string tok;
      while (std::getline(hs, tok, ',')) cfg.hidden.push_back(std::stoi(tok));
    } else {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

int cmd_train(const std::string& bench_file, const std::string& cfg_file,
              const std::string& out_dir) {
  std::string split = "train";
  std::string backend = "costmodel";
  TrainConfig cfg = parse_train_cfg(cfg_file, split, backend);

  Dataset ds = load_dataset(bench_file);
  std::vector<ContractionSpec> specs = pick_split(ds, split);
  if (specs.empty()) throw std::runtime_error("empty training split");

  EvalConfig ecfg = EvalConfig::from_env();
  ecfg.backend = backend == "timed" ? BackendKind::timed : BackendKind::costmodel;
  auto evaluator = make_evaluator(ecfg);

  Trainer trainer(specs, cfg, *evaluator);
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto m = trainer.run_iteration();
    if (m.iteration % 10 == 0 || m.iteration + 1 == cfg.iterations) {
      std::cout << "iter " << m.iteration << " reward_mean=" << m.episode_reward_mean
                << " loss=" << m.loss << " eps=" << m.epsilon << "\n";
    }
  }

  fs::create_directories(out_dir);
  trainer.policy().save_file((fs::path(out_dir) / "policy.ckpt").string());
  trainer.best_policy().save_file((fs::path(out_dir) / "best.ckpt").string());
  {
    std::ofstream os(fs::path(out_dir) / "metrics.csv");
    write_metrics_csv(os, trainer.metrics());
  }
  std::cout << "wrote checkpoints and metrics to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& bench_file, const std::string& split,
             const std::string& backend, const std::string& out_dir, int limit) {
  Dataset ds = load_dataset(bench_file);
  std::vector<ContractionSpec> specs = pick_split(ds, split);
  if (limit > 0 && static_cast<std::size_t>(limit) < specs.size()) {
    specs.resize(static_cast<std::size_t>(limit));
  }

  EvalConfig ecfg = EvalConfig::from_env();
  ecfg.backend = backend == "timed" ? BackendKind::timed : BackendKind::costmodel;
  auto evaluator = make_evaluator(ecfg);

  QFunction q = make_q_function(Mlp<float>::load_file(ckpt));
  for (const auto& spec : specs) {
    SearchResult sr = rollout_policy(q, spec, *evaluator);
    write_result_json(out_dir, result_from_search(sr, spec.name, "policy", ecfg.backend));
    std::cout << spec.name << ": " << sr.best_gflops << " GFLOPS (" << sr.evals << " evals, "
              << sr.wall_time_s << " s)\n";
  }
  return 0;
}

int cmd_report(const std::string& dir, const std::string& baseline, const std::string& out_dir) {
  std::vector<MethodResult> results;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream is(entry.path());
    json j = json::parse(is);
    results.push_back(j.get<MethodResult>());
  }
  if (results.empty()) throw std::runtime_error("no .json results under '" + dir + "'");

  RunReport report = build_report(results, baseline);
  const fs::path out = out_dir.empty() ? fs::path(dir) : fs::path(out_dir);
  fs::create_directories(out);
  {
    std::ofstream os(out / "profile.csv");
    write_profile_csv(os, report);
  }
  {
    std::ofstream os(out / "speedup.csv");
    write_speedup_csv(os, report);
  }

  std::cout << "methods: ";
  for (const auto& m : report.methods) std::cout << m << ' ';
  std::cout << "\nbenchmarks: " << report.benchmarks.size() << "\n";
  for (const auto& m : report.methods) {
    double sum = 0.0;
    for (const auto& [bench, s] : report.speedup.at(m)) sum += s;
    std::cout << "  " << m << ": mean speedup vs " << baseline << " = "
              << sum / static_cast<double>(report.benchmarks.size()) << "\n";
  }
  std::cout << "wrote " << (out / "profile.csv") << " and " << (out / "speedup.csv") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"loop-nest autotuning toolkit for CPU tensor contractions"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate the matmul benchmark dataset");
  std::string gen_out = "ds.txt";
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "output dataset file");
  gen->add_option("--seed", gen_seed, "shuffle seed");

  // tune
  auto* tune = app.add_subcommand("tune", "tune benchmarks with a search method or policy");
  std::string tune_bench, tune_split = "test", tune_method = "beam4dfs";
  std::string tune_backend = "costmodel", tune_out = "results", tune_ckpt;
  double tune_budget = 60.0;
  int tune_depth = 10, tune_limit = 0;
  int tune_threads = static_cast<int>(std::thread::hardware_concurrency());
  std::uint64_t tune_seed = 0;
  tune->add_option("--bench", tune_bench, "dataset file")->required();
  tune->add_option("--split", tune_split, "train|test|all");
  tune->add_option("--method", tune_method,
                   "greedy1|greedy2|beam2dfs|beam2bfs|beam4dfs|beam4bfs|random|policy");
  tune->add_option("--budget", tune_budget, "per-benchmark budget in seconds");
  tune->add_option("--depth", tune_depth, "search depth / episode length");
  tune->add_option("--backend", tune_backend, "costmodel|timed");
  tune->add_option("--out", tune_out, "results directory");
  tune->add_option("--seed", tune_seed, "random-search seed");
  tune->add_option("--ckpt", tune_ckpt, "policy checkpoint (method=policy)");
  tune->add_option("--limit", tune_limit, "tune only the first N benchmarks");
  tune->add_option("--threads", tune_threads, "cost-model worker threads");

  // train
  auto* train = app.add_subcommand("train", "train the DQN policy");
  std::string train_bench, train_cfg, train_out = "ckpt";
  train->add_option("--bench", train_bench, "dataset file")->required();
  train->add_option("--cfg", train_cfg, "key=value config file");
  train->add_option("--out", train_out, "checkpoint/metrics directory");

  // eval
  auto* eval = app.add_subcommand("eval", "roll out a trained policy over a split");
  std::string eval_ckpt, eval_bench, eval_split = "test", eval_backend = "costmodel",
              eval_out = "results";
  int eval_limit = 0;
  eval->add_option("--ckpt", eval_ckpt, "policy checkpoint")->required();
  eval->add_option("--bench", eval_bench, "dataset file")->required();
  eval->add_option("--split", eval_split, "train|test|all");
  eval->add_option("--backend", eval_backend, "costmodel|timed");
  eval->add_option("--out", eval_out, "results directory");
  eval->add_option("--limit", eval_limit, "evaluate only the first N benchmarks");

  // report
  auto* report = app.add_subcommand("report", "aggregate results into profiles and speedups");
  std::string report_dir, report_baseline = "original", report_out;
  report->add_option("--dir", report_dir, "results directory")->required();
  report->add_option("--baseline", report_baseline, "baseline method (or 'original')");
  report->add_option("--out", report_out, "output directory (default: --dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_seed);
    if (tune->parsed()) {
      return cmd_tune(tune_bench, tune_split, tune_method, tune_budget, tune_depth,
                      tune_backend, tune_out, tune_seed, tune_ckpt, tune_limit, tune_threads);
    }
    if (train->parsed()) return cmd_train(train_bench, train_cfg, train_out);
    if (eval->parsed()) {
      return cmd_eval(eval_ckpt, eval_bench, eval_split, eval_backend, eval_out, eval_limit);
    }
    if (report->parsed()) return cmd_report(report_dir, report_baseline, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
