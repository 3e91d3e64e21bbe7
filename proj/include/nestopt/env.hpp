#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestopt/action.hpp"
#include "nestopt/backend.hpp"
#include "nestopt/features.hpp"
#include "nestopt/search.hpp"

namespace nestopt {

inline constexpr int kEpisodeLen = 10;

struct TransitionInfo {
  bool applied = false;
  bool changed = false;
  double gflops = 0.0;  // of the post-step state
  std::string key;
  std::array<bool, kActionCount> next_legal{};
};

struct Transition {
  Observation obs{};
  Action action = Action::up;
  double reward = 0.0;
  Observation next_obs{};
  bool done = false;
  TransitionInfo info;
};

/// Episodic tuning environment: reset lowers a benchmark and measures it,
/// step applies one action and rewards the normalized GFLOPS delta.
/// Cursor-only and rejected actions short-circuit to reward 0 with no
/// evaluation. Episodes end after kEpisodeLen steps or when the agent
/// oscillates between cursor positions of one schedule.
class Environment {
 public:
  explicit Environment(Evaluator& backend) : backend_(backend) {}

  Observation reset(const ContractionSpec& spec) {
    ir_ = lower(spec);
    peak_ = backend_.peak();
    last_gflops_ = memoized_eval(*ir_, backend_, cache_).gflops;
    step_index_ = 0;
    done_ = false;
    window_.clear();
    window_.push({canonical_key(*ir_), ir_->cursor});
    return encode(*ir_);
  }

  /// legal_actions of the current schedule, minus splits that would push
  /// the loop count past the observation capacity.
  std::array<bool, kActionCount> legal() const {
    auto mask = legal_mask(*ir_);
    if (ir_->loops.size() >= kMaxLoops) {
      for (Action a : all_actions()) {
        if (is_split(a)) mask[static_cast<std::size_t>(a)] = false;
      }
    }
    return mask;
  }

  Transition step(Action a) {
    if (!ir_ || done_) throw std::logic_error("step on a finished episode");
    Transition tr;
    tr.obs = encode(*ir_);
    tr.action = a;

    const auto mask = legal();
    ActionOutcome out = mask[static_cast<std::size_t>(a)]
                            ? apply(*ir_, a)
                            : ActionOutcome{*ir_, false, false};
    ir_ = std::move(out.next);
    if (out.changed) {
      const double g = memoized_eval(*ir_, backend_, cache_).gflops;
      tr.reward = (g - last_gflops_) / peak_.gflops_peak;
      last_gflops_ = g;
    }
    ++step_index_;
    window_.push({canonical_key(*ir_), ir_->cursor});
    done_ = step_index_ >= kEpisodeLen || window_.detected();

    tr.next_obs = encode(*ir_);
    tr.done = done_;
    tr.info.applied = out.applied;
    tr.info.changed = out.changed;
    tr.info.gflops = last_gflops_;
    tr.info.key = canonical_key(*ir_);
    tr.info.next_legal = legal();
    return tr;
  }

  bool done() const { return done_; }
  int step_index() const { return step_index_; }
  double last_gflops() const { return last_gflops_; }
  const LoopIR& ir() const { return *ir_; }
  const PeakEstimate& peak() const { return peak_; }
  EvalCache& cache() { return cache_; }
  Evaluator& backend() { return backend_; }

 private:
  Evaluator& backend_;
  EvalCache cache_;
  std::optional<LoopIR> ir_;
  PeakEstimate peak_{};
  double last_gflops_ = 0.0;
  int step_index_ = 0;
  bool done_ = true;
  OscillationWindow window_;
};

/// Q-value oracle over observations; the trainer provides one from a
/// checkpointed network.
using QFunction = std::function<std::array<double, kActionCount>(const Observation&)>;

inline int argmax_legal(std::span<const double> q, const std::array<bool, kActionCount>& mask) {
  int best = -1;
  double best_q = 0.0;
  for (int i = 0; i < kActionCount; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    if (best < 0 || q[static_cast<std::size_t>(i)] > best_q) {
      best = i;
      best_q = q[static_cast<std::size_t>(i)];
    }
  }
  return best;
}

/// Greedy policy rollout: at most one reset evaluation plus one per
/// structural step (<= 11 total). Returns the best state visited along the
/// trajectory, which is not necessarily the final one.
inline SearchResult rollout_policy(const QFunction& policy, const ContractionSpec& spec,
                                   Evaluator& backend) {
  backend.peak();  // peak measurement stays outside the timed region
  const auto start = std::chrono::steady_clock::now();
  Environment env(backend);

  Observation obs = env.reset(spec);
  SearchResult r;
  r.best_gflops = env.last_gflops();
  r.best_key = canonical_key(env.ir());
  r.per_step_trace.push_back({0, r.best_gflops, 0.0});

  std::vector<Action> path;
  while (!env.done()) {
    const auto q = policy(obs);
    const int a = argmax_legal(std::span<const double>(q.data(), q.size()), env.legal());
    Transition tr = env.step(static_cast<Action>(a));
    path.push_back(static_cast<Action>(a));
    obs = tr.next_obs;
    if (tr.info.changed && tr.info.gflops > r.best_gflops) {
      r.best_gflops = tr.info.gflops;
      r.best_actions = path;
      r.best_key = tr.info.key;
    }
    const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.per_step_trace.push_back({static_cast<int>(path.size()), r.best_gflops, el});
  }
  r.nodes_expanded = static_cast<std::int64_t>(path.size());
  r.evals = env.cache().misses;
  r.cache_hits = env.cache().hits;
  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace nestopt
