#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "nestopt/env.hpp"
#include "nestopt/mlp.hpp"
#include "nestopt/replay.hpp"

namespace nestopt {

/// Size and tail columns are scaled by 1/256 (the largest dataset extent)
/// at ingestion; flags and histogram counts stay raw.
inline constexpr double kSizeScale = 1.0 / 256.0;

template <typename Scalar = float>
std::vector<Scalar> normalize_observation(const Observation& obs) {
  std::vector<Scalar> x(kObservationSize);
  for (int slot = 0; slot < kMaxLoops; ++slot) {
    const int base = slot * kFeaturesPerLoop;
    for (int f = 0; f < kFeaturesPerLoop; ++f) {
      const double v = static_cast<double>(obs[static_cast<std::size_t>(base + f)]);
      x[static_cast<std::size_t>(base + f)] =
          static_cast<Scalar>(f == 1 || f == 2 ? v * kSizeScale : v);
    }
  }
  return x;
}

inline QFunction make_q_function(Mlp<float> net) {
  return [net = std::move(net)](const Observation& obs) {
    const auto x = normalize_observation<float>(obs);
    const auto q = net.forward(std::span<const float>(x.data(), x.size()));
    std::array<double, kActionCount> out{};
    for (int i = 0; i < kActionCount; ++i) out[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)];
    return out;
  };
}

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double gamma = 0.9;
  double eps_start = 1.0;
  double eps_end = 0.05;  // annealed linearly over the first half of training
  int target_sync = 50;   // gradient steps between target-network syncs
  int batch_size = 64;
  int iterations = 300;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {256, 256};
  std::size_t replay_capacity = 20000;
  double per_alpha = 0.6;
  double per_beta = 0.4;
  int actors = 4;               // logical actors: episodes per iteration
  int updates_per_iteration = 8;
  double priority_offset = 1e-3;
};

struct IterationMetrics {
  int iteration = 0;
  double episode_reward_mean = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
};

inline void write_metrics_csv(std::ostream& os, std::span<const IterationMetrics> metrics) {
  os << "iteration,episode_reward_mean,loss,epsilon\n";
  for (const auto& m : metrics) {
    os << m.iteration << ',' << m.episode_reward_mean << ',' << m.loss << ',' << m.epsilon
       << '\n';
  }
}

/// One already-normalized training sample.
template <typename Scalar>
struct TdSample {
  std::vector<Scalar> x;
  std::vector<Scalar> x_next;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  std::array<bool, kActionCount> next_legal{};
  double weight = 1.0;  // importance-sampling weight
};

template <typename Scalar>
struct TdUpdateResult {
  double loss = 0.0;
  typename Mlp<Scalar>::Gradients grads;
  std::vector<double> new_priorities;
};

/// Importance-weighted Huber loss on the one-step TD error
///   Q(s,a) - (r + gamma * max_legal Q_target(s') * (1 - done)),
/// with illegal next actions masked out of the max. New priorities are
/// |TD error| + priority_offset.
template <typename Scalar>
TdUpdateResult<Scalar> td_update(const Mlp<Scalar>& policy, const Mlp<Scalar>& target,
                                 std::span<const TdSample<Scalar>> batch, double gamma,
                                 double priority_offset = 1e-3) {
  TdUpdateResult<Scalar> result;
  result.grads.init_like(policy);
  if (batch.empty()) return result;

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const TdSample<Scalar>& s : batch) {
    typename Mlp<Scalar>::Workspace ws;
    const auto q = policy.forward(std::span<const Scalar>(s.x.data(), s.x.size()), ws);

    double target_value = s.reward;
    if (!s.done) {
      const auto qn = target.forward(std::span<const Scalar>(s.x_next.data(), s.x_next.size()));
      double best = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < kActionCount; ++i) {
        if (s.next_legal[static_cast<std::size_t>(i)]) {
          best = std::max(best, static_cast<double>(qn[static_cast<std::size_t>(i)]));
        }
      }
      if (best == -std::numeric_limits<double>::infinity()) best = 0.0;
      target_value += gamma * best;
    }

    const double err = static_cast<double>(q[static_cast<std::size_t>(s.action)]) - target_value;
    const double huber = std::abs(err) <= 1.0 ? 0.5 * err * err : std::abs(err) - 0.5;
    result.loss += s.weight * huber * inv_n;
    const double dq = s.weight * std::clamp(err, -1.0, 1.0) * inv_n;

    std::vector<Scalar> dout(static_cast<std::size_t>(kActionCount), Scalar(0));
    dout[static_cast<std::size_t>(s.action)] = static_cast<Scalar>(dq);
    policy.backward(std::span<const Scalar>(s.x.data(), s.x.size()), ws,
                    std::span<const Scalar>(dout.data(), dout.size()), result.grads);
    result.new_priorities.push_back(std::abs(err) + priority_offset);
  }
  return result;
}

/// Single-learner DQN with prioritized replay. Logical actors run
/// episodes sequentially against one environment per trainer;
/// deterministic for a fixed seed under the cost-model backend.
class Trainer {
 public:
  Trainer(std::vector<ContractionSpec> benchmarks, TrainConfig cfg, Evaluator& backend)
      : benchmarks_(std::move(benchmarks)),
        cfg_(cfg),
        env_(backend),
        replay_(cfg.replay_capacity, cfg.per_alpha, cfg.per_beta, cfg.seed ^ 0x9e3779b97f4a7c15ull),
        rng_(cfg.seed),
        policy_(make_dims(cfg), cfg.seed),
        target_(policy_),
        best_policy_(policy_),
        adam_(cfg.learning_rate) {
    if (benchmarks_.empty()) throw std::invalid_argument("trainer needs at least one benchmark");
  }

  double epsilon(int iteration) const {
    const int half = std::max(1, cfg_.iterations / 2);
    if (iteration >= half) return cfg_.eps_end;
    const double f = static_cast<double>(iteration) / static_cast<double>(half);
    return cfg_.eps_start + f * (cfg_.eps_end - cfg_.eps_start);
  }

  IterationMetrics run_iteration() {
    const double eps = epsilon(iteration_);
    double reward_sum = 0.0;
    for (int a = 0; a < cfg_.actors; ++a) {
      const ContractionSpec& spec = benchmarks_[episode_count_ % benchmarks_.size()];
      ++episode_count_;
      reward_sum += run_episode(spec, eps);
    }

    double loss_sum = 0.0;
    int loss_count = 0;
    if (replay_.size() >= static_cast<std::size_t>(cfg_.batch_size)) {
      for (int u = 0; u < cfg_.updates_per_iteration; ++u) {
        const auto sampled = replay_.sample(static_cast<std::size_t>(cfg_.batch_size));
        std::vector<TdSample<float>> batch;
        batch.reserve(sampled.indices.size());
        for (std::size_t i = 0; i < sampled.indices.size(); ++i) {
          batch.push_back(to_sample(replay_.at(sampled.indices[i]), sampled.weights[i]));
        }
        auto td = td_update<float>(policy_, target_,
                                   std::span<const TdSample<float>>(batch.data(), batch.size()),
                                   cfg_.gamma, cfg_.priority_offset);
        if (!std::isfinite(td.loss)) {
          throw DivergenceError("training loss is non-finite at iteration " +
                                std::to_string(iteration_));
        }
        adam_.step(policy_, td.grads);
        for (std::size_t i = 0; i < sampled.indices.size(); ++i) {
          replay_.update_priority(sampled.indices[i], td.new_priorities[i]);
        }
        ++updates_;
        if (updates_ % cfg_.target_sync == 0) target_ = policy_;
        loss_sum += td.loss;
        ++loss_count;
      }
    }

    IterationMetrics m;
    m.iteration = iteration_;
    m.episode_reward_mean = reward_sum / static_cast<double>(cfg_.actors);
    m.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    m.epsilon = eps;
    metrics_.push_back(m);
    if (m.episode_reward_mean > best_reward_) {
      best_reward_ = m.episode_reward_mean;
      best_policy_ = policy_;
    }
    ++iteration_;
    return m;
  }

  void run() {
    while (iteration_ < cfg_.iterations) run_iteration();
  }

  const Mlp<float>& policy() const { return policy_; }
  const Mlp<float>& target() const { return target_; }
  const Mlp<float>& best_policy() const { return best_policy_; }
  const std::vector<IterationMetrics>& metrics() const { return metrics_; }
  Environment& env() { return env_; }
  PrioritizedReplay& replay() { return replay_; }
  std::int64_t updates() const { return updates_; }

 private:
  static std::vector<int> make_dims(const TrainConfig& cfg) {
    std::vector<int> dims;
    dims.push_back(kObservationSize);
    for (int h : cfg.hidden) dims.push_back(h);
    dims.push_back(kActionCount);
    return dims;
  }

  TdSample<float> to_sample(const Transition& tr, double weight) const {
    TdSample<float> s;
    s.x = normalize_observation<float>(tr.obs);
    s.x_next = normalize_observation<float>(tr.next_obs);
    s.action = static_cast<int>(tr.action);
    s.reward = tr.reward;
    s.done = tr.done;
    s.next_legal = tr.info.next_legal;
    s.weight = weight;
    return s;
  }

  double run_episode(const ContractionSpec& spec, double eps) {
    Observation obs = env_.reset(spec);
    double total = 0.0;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    while (!env_.done()) {
      const auto mask = env_.legal();
      int action;
      if (unit(rng_) < eps) {
        std::vector<int> legal;
        for (int i = 0; i < kActionCount; ++i) {
          if (mask[static_cast<std::size_t>(i)]) legal.push_back(i);
        }
        action = legal[static_cast<std::size_t>(rng_() % legal.size())];
      } else {
        const auto x = normalize_observation<float>(obs);
        const auto q = policy_.forward(std::span<const float>(x.data(), x.size()));
        std::array<double, kActionCount> qd{};
        for (int i = 0; i < kActionCount; ++i) qd[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)];
        action = argmax_legal(std::span<const double>(qd.data(), qd.size()), mask);
      }
      Transition tr = env_.step(static_cast<Action>(action));
      total += tr.reward;
      obs = tr.next_obs;
      replay_.push(std::move(tr), replay_.max_priority());
    }
    return total;
  }

  std::vector<ContractionSpec> benchmarks_;
  TrainConfig cfg_;
  Environment env_;
  PrioritizedReplay replay_;
  std::mt19937_64 rng_;
  Mlp<float> policy_;
  Mlp<float> target_;
  Mlp<float> best_policy_;
  AdamOptimizer<float> adam_;
  std::vector<IterationMetrics> metrics_;
  int iteration_ = 0;
  std::size_t episode_count_ = 0;
  std::int64_t updates_ = 0;
  double best_reward_ = -std::numeric_limits<double>::infinity();
};

/// One greedy (epsilon = 0) episode; returns the summed reward.
inline double run_greedy_episode(Environment& env, const QFunction& q,
                                 const ContractionSpec& spec) {
  Observation obs = env.reset(spec);
  double total = 0.0;
  while (!env.done()) {
    const auto values = q(obs);
    const int a = argmax_legal(std::span<const double>(values.data(), values.size()), env.legal());
    Transition tr = env.step(static_cast<Action>(a));
    total += tr.reward;
    obs = tr.next_obs;
  }
  return total;
}

/// One uniform-random-policy episode; the baseline for learning checks.
inline double run_random_episode(Environment& env, const ContractionSpec& spec,
                                 std::mt19937_64& rng) {
  env.reset(spec);
  double total = 0.0;
  while (!env.done()) {
    const auto mask = env.legal();
    std::vector<int> legal;
    for (int i = 0; i < kActionCount; ++i) {
      if (mask[static_cast<std::size_t>(i)]) legal.push_back(i);
    }
    const int a = legal[static_cast<std::size_t>(rng() % legal.size())];
    total += env.step(static_cast<Action>(a)).reward;
  }
  return total;
}

}  // namespace nestopt
