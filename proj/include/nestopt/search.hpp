#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "nestopt/action.hpp"
#include "nestopt/backend.hpp"

namespace nestopt {

enum class SearchMethod { greedy, beam_dfs, beam_bfs, random };

inline const char* search_method_name(SearchMethod m) {
  switch (m) {
    case SearchMethod::greedy: return "greedy";
    case SearchMethod::beam_dfs: return "beam_dfs";
    case SearchMethod::beam_bfs: return "beam_bfs";
    case SearchMethod::random: return "random";
  }
  return "?";
}

struct SearchConfig {
  SearchMethod method = SearchMethod::greedy;
  int lookahead = 1;      // greedy
  int width = 2;          // beam
  int depth = 10;
  double budget_s = 60.0;
  std::uint64_t seed = 0;     // random
  std::int64_t max_samples = 0;  // random: 0 = sample until the budget ends
};

struct TracePoint {
  int step = 0;
  double best_gflops = 0.0;
  double time_s = 0.0;
};

struct SearchResult {
  std::vector<Action> best_actions;
  double best_gflops = 0.0;
  std::string best_key;
  std::int64_t nodes_expanded = 0;
  std::int64_t evals = 0;  // backend calls (cache misses)
  std::int64_t cache_hits = 0;
  double wall_time_s = 0.0;
  std::vector<TracePoint> per_step_trace;
};

/// Shared evaluation memo keyed by canonical_key; cursor-only variants of
/// one schedule hit the cache.
struct EvalCache {
  std::unordered_map<std::string, EvalResult> table;
  std::int64_t hits = 0;
  std::int64_t misses = 0;
};

inline EvalResult memoized_eval(const LoopIR& ir, Evaluator& backend, EvalCache& cache) {
  std::string key = canonical_key(ir);
  if (auto it = cache.table.find(key); it != cache.table.end()) {
    ++cache.hits;
    return it->second;
  }
  ++cache.misses;
  EvalResult r = backend.evaluate(ir);
  cache.table.emplace(std::move(key), r);
  return r;
}

inline LoopIR replay_actions(const LoopIR& root, std::span<const Action> actions) {
  LoopIR ir = root;
  for (Action a : actions) ir = apply(ir, a).next;
  return ir;
}

namespace detail {

/// Bookkeeping common to every search: memoized evaluation, best-state
/// tracking with its action path, wall-clock budget, and the per-depth
/// best-so-far trace.
class SearchContext {
 public:
  SearchContext(Evaluator& backend, double budget_s)
      : backend_(backend), budget_s_(budget_s), start_(std::chrono::steady_clock::now()) {}

  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool out_of_time() const { return elapsed_s() >= budget_s_; }

  double eval_state(const LoopIR& ir, const std::vector<Action>& path) {
    std::string key = canonical_key(ir);
    EvalResult r;
    if (auto it = cache_.table.find(key); it != cache_.table.end()) {
      ++cache_.hits;
      r = it->second;
    } else {
      ++cache_.misses;
      r = backend_.evaluate(ir);
      cache_.table.emplace(key, r);
    }
    const std::size_t d = path.size();
    if (depth_.size() <= d) depth_.resize(d + 1);
    DepthCell& cell = depth_[d];
    if (!cell.seen || r.gflops > cell.best) {
      cell.seen = true;
      cell.best = r.gflops;
      cell.time_s = elapsed_s();
    }
    if (!has_best_ || r.gflops > best_) {
      has_best_ = true;
      best_ = r.gflops;
      best_path_ = path;
      best_key_ = std::move(key);
    }
    return r.gflops;
  }

  void count_expansion() { ++nodes_expanded_; }
  EvalCache& cache() { return cache_; }

  SearchResult finish() const {
    SearchResult r;
    r.best_actions = best_path_;
    r.best_gflops = best_;
    r.best_key = best_key_;
    r.nodes_expanded = nodes_expanded_;
    r.evals = cache_.misses;
    r.cache_hits = cache_.hits;
    r.wall_time_s = elapsed_s();
    double running = -std::numeric_limits<double>::infinity();
    double t = 0.0;
    for (std::size_t d = 0; d < depth_.size(); ++d) {
      const DepthCell& cell = depth_[d];
      if (cell.seen) {
        running = std::max(running, cell.best);
        t = std::max(t, cell.time_s);
      }
      if (running > -std::numeric_limits<double>::infinity()) {
        r.per_step_trace.push_back({static_cast<int>(d), running, t});
      }
    }
    return r;
  }

 private:
  struct DepthCell {
    bool seen = false;
    double best = 0.0;
    double time_s = 0.0;
  };

  Evaluator& backend_;
  EvalCache cache_;
  double budget_s_;
  std::chrono::steady_clock::time_point start_;
  bool has_best_ = false;
  double best_ = 0.0;
  std::vector<Action> best_path_;
  std::string best_key_;
  std::int64_t nodes_expanded_ = 0;
  std::vector<DepthCell> depth_;
};

}  // namespace detail

/// Greedy search with lookahead: each step enumerates every legal action
/// sequence of `lookahead` steps, evaluates the terminals, and commits the
/// first action of the best sequence (ties resolved toward the
/// lexicographically smallest action-id sequence). Lookahead 1 stops when
/// no action strictly improves; deeper lookaheads stop only when the best
/// terminal falls below the current state. The scan is truncated near the
/// horizon so no evaluated state lies deeper than cfg.depth.
inline SearchResult greedy_search(const LoopIR& root, const SearchConfig& cfg,
                                  Evaluator& backend) {
  detail::SearchContext ctx(backend, cfg.budget_s);
  const int lookahead = std::max(1, cfg.lookahead);

  std::vector<Action> path;
  LoopIR state = root;
  double current = ctx.eval_state(state, path);

  for (int step = 0; step < cfg.depth && !ctx.out_of_time(); ++step) {
    const int ahead = std::min(lookahead, cfg.depth - step);
    double best_val = -std::numeric_limits<double>::infinity();
    std::vector<Action> best_seq;
    std::vector<Action> seq;
    bool timed_out = false;

    auto dfs = [&](auto&& self, const LoopIR& s, int remaining) -> void {
      if (timed_out) return;
      if (remaining == 0) {
        if (ctx.out_of_time()) {
          timed_out = true;
          return;
        }
        std::vector<Action> full = path;
        full.insert(full.end(), seq.begin(), seq.end());
        const double v = ctx.eval_state(s, full);
        if (v > best_val) {
          best_val = v;
          best_seq = seq;
        }
        return;
      }
      ctx.count_expansion();
      for (Action a : all_actions()) {
        ActionOutcome out = apply(s, a);
        if (!out.applied) continue;
        seq.push_back(a);
        self(self, out.next, remaining - 1);
        seq.pop_back();
        if (timed_out) return;
      }
    };
    dfs(dfs, state, ahead);

    if (timed_out || best_seq.empty()) break;
    const bool stop = ahead == 1 ? best_val <= current : best_val < current;
    if (stop) break;

    path.push_back(best_seq.front());
    state = apply(state, best_seq.front()).next;
    current = ctx.eval_state(state, path);
  }
  return ctx.finish();
}

/// Beam search: every node's legal children are evaluated, ranked by value
/// (ties by action id), and the top `width` survive. beam_dfs expands the
/// ranked children depth-first; beam_bfs completes each depth layer before
/// the next. Both return the best state seen when the budget ends.
inline SearchResult beam_search(const LoopIR& root, const SearchConfig& cfg,
                                Evaluator& backend) {
  detail::SearchContext ctx(backend, cfg.budget_s);
  const int width = std::max(1, cfg.width);

  struct Node {
    LoopIR state;
    std::vector<Action> path;
  };

  ctx.eval_state(root, {});

  auto expand = [&](const Node& node) {
    std::vector<std::pair<double, Node>> ranked;
    ctx.count_expansion();
    for (Action a : all_actions()) {
      if (ctx.out_of_time()) break;
      ActionOutcome out = apply(node.state, a);
      if (!out.applied) continue;
      Node child{std::move(out.next), node.path};
      child.path.push_back(a);
      const double v = ctx.eval_state(child.state, child.path);
      ranked.emplace_back(v, std::move(child));
    }
    // stable: equal values keep ascending action-id order
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    if (static_cast<int>(ranked.size()) > width) ranked.resize(static_cast<std::size_t>(width));
    std::vector<Node> kept;
    kept.reserve(ranked.size());
    for (auto& [v, n] : ranked) kept.push_back(std::move(n));
    return kept;
  };

  if (cfg.method == SearchMethod::beam_bfs) {
    std::vector<Node> frontier;
    frontier.push_back({root, {}});
    for (int d = 0; d < cfg.depth && !frontier.empty() && !ctx.out_of_time(); ++d) {
      std::vector<Node> next;
      for (const Node& node : frontier) {
        if (ctx.out_of_time()) break;
        auto kids = expand(node);
        for (auto& k : kids) next.push_back(std::move(k));
      }
      frontier = std::move(next);
    }
  } else {
    auto dfs = [&](auto&& self, const Node& node) -> void {
      if (static_cast<int>(node.path.size()) >= cfg.depth || ctx.out_of_time()) return;
      auto kids = expand(node);
      for (const Node& k : kids) self(self, k);
    };
    dfs(dfs, Node{root, {}});
  }
  return ctx.finish();
}

/// Uniformly samples legal action sequences of length `depth`, evaluating
/// every prefix state, until the budget (or max_samples) is exhausted.
inline SearchResult random_search(const LoopIR& root, const SearchConfig& cfg,
                                  Evaluator& backend) {
  detail::SearchContext ctx(backend, cfg.budget_s);
  std::mt19937_64 rng(cfg.seed);

  ctx.eval_state(root, {});
  for (std::int64_t n = 0; cfg.max_samples == 0 || n < cfg.max_samples; ++n) {
    if (ctx.out_of_time()) break;
    LoopIR state = root;
    std::vector<Action> path;
    for (int i = 0; i < cfg.depth; ++i) {
      const auto legal = legal_actions(state);
      ctx.count_expansion();
      const Action a = legal[static_cast<std::size_t>(rng() % legal.size())];
      state = apply(state, a).next;
      path.push_back(a);
      if (ctx.out_of_time()) break;
      ctx.eval_state(state, path);
    }
  }
  return ctx.finish();
}

inline SearchResult run_search(const LoopIR& root, const SearchConfig& cfg,
                               Evaluator& backend) {
  switch (cfg.method) {
    case SearchMethod::greedy: return greedy_search(root, cfg, backend);
    case SearchMethod::beam_dfs:
    case SearchMethod::beam_bfs: return beam_search(root, cfg, backend);
    case SearchMethod::random: return random_search(root, cfg, backend);
  }
  return {};
}

}  // namespace nestopt
