#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nestopt/nestopt.hpp"
#include "oracles.hpp"

using namespace nestopt;
using nestopt::testing::matmul_spec;

namespace {

template <typename Scalar>
TdSample<Scalar> random_sample(int in_dim, std::mt19937_64& rng, bool done) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  TdSample<Scalar> s;
  s.x.resize(static_cast<std::size_t>(in_dim));
  s.x_next.resize(static_cast<std::size_t>(in_dim));
  for (auto& v : s.x) v = static_cast<Scalar>(dist(rng));
  for (auto& v : s.x_next) v = static_cast<Scalar>(dist(rng));
  s.action = static_cast<int>(rng() % kActionCount);
  s.reward = dist(rng);
  s.done = done;
  for (int i = 0; i < kActionCount; ++i) s.next_legal[static_cast<std::size_t>(i)] = rng() % 2 == 0;
  s.next_legal[static_cast<std::size_t>(rng() % kActionCount)] = true;  // at least one legal
  s.weight = 0.5 + dist(rng) * 0.25;
  return s;
}

template <typename Scalar>
double td_loss(const Mlp<Scalar>& policy, const Mlp<Scalar>& target,
               std::span<const TdSample<Scalar>> batch, double gamma) {
  return td_update<Scalar>(policy, target, batch, gamma).loss;
}

}  // namespace

TEST_CASE("normalize_observation scales sizes and tails by 1/256") {
  Observation obs{};
  obs[0] = 1;    // cursor flag, raw
  obs[1] = 128;  // size
  obs[2] = 64;   // tail
  obs[3] = 1;    // compute flag, raw
  obs[4] = 3;    // histogram, raw
  obs[kFeaturesPerLoop + 1] = 256;
  auto x = normalize_observation<double>(obs);
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 0.5);
  CHECK(x[2] == 0.25);
  CHECK(x[3] == 1.0);
  CHECK(x[4] == 3.0);
  CHECK(x[kFeaturesPerLoop + 1] == 1.0);
}

TEST_CASE("td_update: done transition with zero reward and zero Q") {
  Mlp<double> policy({4, 3, kActionCount}, 1);
  for (auto& w : policy.weights()) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : policy.biases()) std::fill(b.begin(), b.end(), 0.0);
  Mlp<double> target = policy;

  TdSample<double> s;
  s.x.assign(4, 0.5);
  s.x_next.assign(4, 0.5);
  s.action = 3;
  s.reward = 0.0;
  s.done = true;
  s.weight = 1.0;

  auto r = td_update<double>(policy, target, std::span(&s, 1), 0.9);
  CHECK(r.loss == 0.0);
  CHECK(r.new_priorities[0] == Catch::Approx(1e-3).margin(1e-15));
  for (const auto& layer : r.grads.w) {
    for (double g : layer) CHECK(g == 0.0);
  }
}

TEST_CASE("td_update: gamma = 0 reduces the target to the reward") {
  std::mt19937_64 rng(5);
  Mlp<double> policy({6, 8, kActionCount}, 2);
  Mlp<double> target({6, 8, kActionCount}, 3);

  auto s = random_sample<double>(6, rng, false);
  s.weight = 1.0;
  auto r = td_update<double>(policy, target, std::span(&s, 1), 0.0);

  const double q = policy.forward(s.x)[static_cast<std::size_t>(s.action)];
  const double err = q - s.reward;
  const double huber = std::abs(err) <= 1.0 ? 0.5 * err * err : std::abs(err) - 0.5;
  CHECK(r.loss == Catch::Approx(huber).epsilon(1e-12));
  CHECK(r.new_priorities[0] == Catch::Approx(std::abs(err) + 1e-3).epsilon(1e-12));
}

TEST_CASE("td_update: gradients match central finite differences") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2; ++trial) {
    Mlp<double> policy({5, 6, kActionCount}, 10 + static_cast<std::uint64_t>(trial));
    Mlp<double> target({5, 6, kActionCount}, 20 + static_cast<std::uint64_t>(trial));
    std::vector<TdSample<double>> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_sample<double>(5, rng, i % 2 == 0));

    auto analytic = td_update<double>(policy, target, std::span(batch.data(), batch.size()), 0.9);

    // skip probes that straddle a rectifier kink (one-sided slopes differ):
    // central differences are no oracle at nondifferentiable points
    const double h = 1e-6;
    const double mid = analytic.loss;
    std::size_t flat = 0;
    for (std::size_t l = 0; l < policy.weights().size(); ++l) {
      auto check_block = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); i += 7) {  // sample every 7th parameter
          const double orig = params[i];
          params[i] = orig + h;
          const double up = td_loss<double>(policy, target, std::span(batch.data(), batch.size()), 0.9);
          params[i] = orig - h;
          const double down = td_loss<double>(policy, target, std::span(batch.data(), batch.size()), 0.9);
          params[i] = orig;
          const double fd_forward = (up - mid) / h;
          const double fd_backward = (mid - down) / h;
          if (std::abs(fd_forward - fd_backward) >
              1e-3 * std::max({1.0, std::abs(fd_forward), std::abs(fd_backward)})) {
            continue;
          }
          const double fd = (up - down) / (2.0 * h);
          const double an = grads[i];
          CHECK(std::abs(fd - an) <= 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}));
        }
        flat += params.size();
      };
      check_block(policy.weights()[l], analytic.grads.w[l]);
      check_block(policy.biases()[l], analytic.grads.b[l]);
    }
    CHECK(flat == policy.parameter_count());
  }
}

TEST_CASE("argmax over masked Q never selects an illegal action") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, kActionCount> q{};
    std::array<bool, kActionCount> mask{};
    for (int i = 0; i < kActionCount; ++i) {
      q[static_cast<std::size_t>(i)] = dist(rng);
      mask[static_cast<std::size_t>(i)] = rng() % 3 != 0;
    }
    mask[static_cast<std::size_t>(rng() % kActionCount)] = true;
    const int a = argmax_legal(std::span<const double>(q.data(), q.size()), mask);
    REQUIRE(a >= 0);
    CHECK(mask[static_cast<std::size_t>(a)]);
    for (int i = 0; i < kActionCount; ++i) {
      if (mask[static_cast<std::size_t>(i)]) CHECK(q[static_cast<std::size_t>(i)] <= q[static_cast<std::size_t>(a)]);
    }
  }
}

TEST_CASE("target network parameters change only at sync points") {
  CostModelEvaluator ev;
  TrainConfig cfg;
  cfg.iterations = 6;
  cfg.actors = 1;
  cfg.batch_size = 4;
  cfg.updates_per_iteration = 1;
  cfg.target_sync = 3;
  cfg.hidden = {16};
  cfg.seed = 2;
  Trainer trainer({matmul_spec(64, 64, 64)}, cfg, ev);

  const Mlp<float> initial = trainer.target();
  trainer.run_iteration();  // update 1
  CHECK(trainer.target() == initial);
  trainer.run_iteration();  // update 2
  CHECK(trainer.target() == initial);
  trainer.run_iteration();  // update 3 -> sync
  CHECK_FALSE(trainer.target() == initial);
  CHECK(trainer.target() == trainer.policy());
  const Mlp<float> synced = trainer.target();
  trainer.run_iteration();  // update 4: policy moves, target stays
  CHECK(trainer.target() == synced);
  CHECK_FALSE(trainer.target() == trainer.policy());
}

TEST_CASE("trainer: fixed seed gives an identical metric trace") {
  auto run = [] {
    CostModelEvaluator ev;
    TrainConfig cfg;
    cfg.iterations = 8;
    cfg.actors = 2;
    cfg.batch_size = 8;
    cfg.updates_per_iteration = 2;
    cfg.hidden = {16, 16};
    cfg.seed = 13;
    Trainer trainer({matmul_spec(64, 64, 64), matmul_spec(96, 64, 64)}, cfg, ev);
    trainer.run();
    return trainer.metrics();
  };
  auto m1 = run();
  auto m2 = run();
  REQUIRE(m1.size() == m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].episode_reward_mean == m2[i].episode_reward_mean);
    CHECK(m1[i].loss == m2[i].loss);
    CHECK(m1[i].epsilon == m2[i].epsilon);
  }
}

TEST_CASE("trainer: divergence guard aborts on a non-finite loss") {
  CostModelEvaluator ev;
  TrainConfig cfg;
  cfg.iterations = 40;
  cfg.actors = 1;
  cfg.batch_size = 4;
  cfg.updates_per_iteration = 4;
  cfg.hidden = {8};
  cfg.learning_rate = 1e30;  // Adam steps of ~1e30 overflow float forward passes
  cfg.seed = 3;
  Trainer trainer({matmul_spec(64, 64, 64)}, cfg, ev);
  CHECK_THROWS_AS(trainer.run(), DivergenceError);
}

TEST_CASE("epsilon anneals linearly over the first half") {
  CostModelEvaluator ev;
  TrainConfig cfg;
  cfg.iterations = 100;
  cfg.eps_start = 1.0;
  cfg.eps_end = 0.05;
  Trainer trainer({matmul_spec(64, 64, 64)}, cfg, ev);
  CHECK(trainer.epsilon(0) == 1.0);
  CHECK(trainer.epsilon(25) == Catch::Approx(0.525));
  CHECK(trainer.epsilon(50) == 0.05);
  CHECK(trainer.epsilon(99) == 0.05);
}

TEST_CASE("greedy and random episode helpers stay within the horizon") {
  CostModelEvaluator ev;
  Environment env(ev);
  Mlp<float> net({kObservationSize, 16, kActionCount}, 5);
  auto q = make_q_function(net);
  const double greedy_total = run_greedy_episode(env, q, matmul_spec(64, 64, 64));
  CHECK(std::isfinite(greedy_total));
  CHECK(env.step_index() <= kEpisodeLen);

  std::mt19937_64 rng(9);
  const double random_total = run_random_episode(env, matmul_spec(64, 64, 64), rng);
  CHECK(std::isfinite(random_total));
  CHECK(env.step_index() <= kEpisodeLen);
}
