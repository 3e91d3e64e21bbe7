#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nestopt/loop_ir.hpp"

namespace nestopt {

enum class BackendKind { timed, costmodel };

inline const char* backend_name(BackendKind k) {
  return k == BackendKind::timed ? "timed" : "costmodel";
}

/// One schedule evaluation. gflops = flops / runtime_ns (flop/ns is
/// numerically GFLOP/s).
struct EvalResult {
  double gflops = 0.0;
  std::int64_t runtime_ns = 0;
  std::int64_t flops = 0;
  BackendKind backend = BackendKind::costmodel;
};

struct PeakEstimate {
  double gflops_peak = 0.0;
  std::string method;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Timing/backend knobs. from_env() honors NESTOPT_BACKEND,
/// NESTOPT_WARMUP_ITERS, NESTOPT_TIMED_ITERS and NESTOPT_MIN_SAMPLE_MS.
struct EvalConfig {
  BackendKind backend = BackendKind::costmodel;
  int warmup_iters = 20;
  int timed_iters = 10;
  double min_sample_ms = 1.0;
  std::uint64_t input_seed = 0x5eedf00d;

  static EvalConfig from_env() {
    EvalConfig cfg;
    if (const char* s = std::getenv("NESTOPT_BACKEND")) {
      cfg.backend = std::string(s) == "timed" ? BackendKind::timed : BackendKind::costmodel;
    }
    if (const char* s = std::getenv("NESTOPT_WARMUP_ITERS")) cfg.warmup_iters = std::atoi(s);
    if (const char* s = std::getenv("NESTOPT_TIMED_ITERS")) cfg.timed_iters = std::atoi(s);
    if (const char* s = std::getenv("NESTOPT_MIN_SAMPLE_MS")) cfg.min_sample_ms = std::atof(s);
    return cfg;
  }
};

namespace detail {

inline void do_not_optimize(const void* p) {
  asm volatile("" : : "g"(p) : "memory");
}

/// A rectangular partition of one nest's iteration space. Tail partitions
/// of splits become separate plans, executed after the main partition.
/// Tensor slots: compute nests use 0=A, 1=B, 2=T; write-back nests use
/// 0=T, 1=output (slot 2 unused).
struct PlanLevel {
  std::int64_t count = 0;
  std::int64_t s0 = 0, s1 = 0, s2 = 0;  // element steps per iteration
};

struct NestPlan {
  std::int64_t b0 = 0, b1 = 0, b2 = 0;  // starting element offsets
  std::vector<PlanLevel> levels;
};

inline std::vector<NestPlan> build_plans(const LoopIR& ir, NestKind nest) {
  const NestInfo& info = *ir.info;
  const std::size_t begin = nest == NestKind::compute ? 0 : ir.compute_loops;
  const std::size_t end = nest == NestKind::compute ? ir.compute_loops : ir.loops.size();
  const std::size_t n = end - begin;

  const TensorLayout& t0 = nest == NestKind::compute ? info.layout_a : info.layout_t;
  const TensorLayout& t1 = nest == NestKind::compute ? info.layout_b : info.layout_out;
  const TensorLayout* t2 = nest == NestKind::compute ? &info.layout_t : nullptr;

  // Rank of each loop within its iterator's split chain: the number of
  // same-var loops in this nest with a strictly larger unit (its split
  // ancestors). Units within a chain are distinct, so this totally orders
  // the chain regardless of list position.
  std::vector<int> rank(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (q != p && ir.loops[begin + q].var == ir.loops[begin + p].var &&
          ir.loops[begin + q].unit > ir.loops[begin + p].unit) {
        ++rank[p];
      }
    }
  }

  // Variables in first-appearance order, with their tail-carrying loops.
  std::vector<std::string> vars;
  std::vector<std::vector<std::size_t>> tails;  // nest-local loop positions
  std::vector<std::size_t> var_of(n);
  for (std::size_t p = 0; p < n; ++p) {
    const auto& v = ir.loops[begin + p].var;
    std::size_t vi = 0;
    for (; vi < vars.size(); ++vi) {
      if (vars[vi] == v) break;
    }
    if (vi == vars.size()) {
      vars.push_back(v);
      tails.emplace_back();
    }
    var_of[p] = vi;
    if (ir.loops[begin + p].tail > 0) tails[vi].push_back(p);
  }

  // One plan per combination of per-variable segment choices: 0 selects
  // the main partition, c >= 1 the tail of tails[var][c-1]. The all-main
  // combination comes first.
  std::vector<std::size_t> choice(vars.size(), 0);
  std::vector<NestPlan> plans;
  for (;;) {
    NestPlan plan;
    for (std::size_t p = 0; p < n; ++p) {
      const LoopDesc& loop = ir.loops[begin + p];
      const std::int64_t s0 = t0.stride(loop.var);
      const std::int64_t s1 = t1.stride(loop.var);
      const std::int64_t s2 = t2 ? t2->stride(loop.var) : 0;
      const std::size_t c = choice[var_of[p]];
      if (c == 0) {
        plan.levels.push_back({loop.size, loop.unit * s0, loop.unit * s1, loop.unit * s2});
        continue;
      }
      const std::size_t tp = tails[var_of[p]][c - 1];
      if (rank[p] < rank[tp]) {
        // split ancestor of the tail loop: iterates its main digits
        plan.levels.push_back({loop.size, loop.unit * s0, loop.unit * s1, loop.unit * s2});
      } else if (p == tp) {
        // flat remainder: `tail` raw iterator values from size*unit
        const LoopDesc& tl = ir.loops[begin + tp];
        plan.levels.push_back({tl.tail, s0, s1, s2});
        plan.b0 += tl.size * tl.unit * s0;
        plan.b1 += tl.size * tl.unit * s1;
        plan.b2 += tl.size * tl.unit * s2;
      }
      // split descendants of the tail loop are collapsed
    }
    plans.push_back(std::move(plan));

    std::size_t i = vars.size();
    for (;;) {
      if (i == 0) return plans;
      --i;
      if (++choice[i] <= tails[i].size()) break;
      choice[i] = 0;
    }
  }
}

/// Innermost multiply-accumulate, specialized for the common stride
/// patterns so the hot loops stay tight and vectorizable.
inline void compute_kernel(std::int64_t n, const float* a, std::int64_t sa,
                           const float* b, std::int64_t sb, float* t,
                           std::int64_t st) {
  if (st == 0) {
    float acc = 0.0f;
    if (sa == 1 && sb == 1) {
      for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
    } else if (sb == 0) {
      const float bv = *b;
      if (sa == 1) {
        for (std::int64_t i = 0; i < n; ++i) acc += a[i] * bv;
      } else {
        for (std::int64_t i = 0; i < n; ++i) acc += a[i * sa] * bv;
      }
    } else if (sa == 0) {
      const float av = *a;
      for (std::int64_t i = 0; i < n; ++i) acc += av * b[i * sb];
    } else {
      for (std::int64_t i = 0; i < n; ++i) acc += a[i * sa] * b[i * sb];
    }
    *t += acc;
  } else if (sa == 0) {
    const float av = *a;
    if (sb == 1 && st == 1) {
      for (std::int64_t i = 0; i < n; ++i) t[i] += av * b[i];
    } else {
      for (std::int64_t i = 0; i < n; ++i) t[i * st] += av * b[i * sb];
    }
  } else if (sb == 0) {
    const float bv = *b;
    if (sa == 1 && st == 1) {
      for (std::int64_t i = 0; i < n; ++i) t[i] += a[i] * bv;
    } else {
      for (std::int64_t i = 0; i < n; ++i) t[i * st] += a[i * sa] * bv;
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) t[i * st] += a[i * sa] * b[i * sb];
  }
}

inline void writeback_kernel(std::int64_t n, const float* t, std::int64_t st,
                             float* out, std::int64_t so, PostOp post) {
  if (post == PostOp::relu) {
    for (std::int64_t i = 0; i < n; ++i) {
      const float v = t[i * st];
      out[i * so] = v > 0.0f ? v : 0.0f;
    }
  } else {
    for (std::int64_t i = 0; i < n; ++i) out[i * so] = t[i * st];
  }
}

inline void run_compute_plan(const NestPlan& plan, const float* a, const float* b, float* t) {
  const auto& levels = plan.levels;
  if (levels.empty()) {
    t[plan.b2] += a[plan.b0] * b[plan.b1];
    return;
  }
  auto rec = [&](auto&& self, std::size_t lvl, std::int64_t oa, std::int64_t ob,
                 std::int64_t ot) -> void {
    const PlanLevel& l = levels[lvl];
    if (lvl + 1 == levels.size()) {
      compute_kernel(l.count, a + oa, l.s0, b + ob, l.s1, t + ot, l.s2);
      return;
    }
    for (std::int64_t i = 0; i < l.count; ++i) {
      self(self, lvl + 1, oa, ob, ot);
      oa += l.s0;
      ob += l.s1;
      ot += l.s2;
    }
  };
  rec(rec, 0, plan.b0, plan.b1, plan.b2);
}

inline void run_writeback_plan(const NestPlan& plan, const float* t, float* out, PostOp post) {
  const auto& levels = plan.levels;
  if (levels.empty()) {
    const float v = t[plan.b0];
    out[plan.b1] = post == PostOp::relu && v < 0.0f ? 0.0f : v;
    return;
  }
  auto rec = [&](auto&& self, std::size_t lvl, std::int64_t ot, std::int64_t oo) -> void {
    const PlanLevel& l = levels[lvl];
    if (lvl + 1 == levels.size()) {
      writeback_kernel(l.count, t + ot, l.s0, out + oo, l.s1, post);
      return;
    }
    for (std::int64_t i = 0; i < l.count; ++i) {
      self(self, lvl + 1, ot, oo);
      ot += l.s0;
      oo += l.s1;
    }
  };
  rec(rec, 0, plan.b0, plan.b1);
}

}  // namespace detail

/// Executes the nest exactly as scheduled (main partitions, then tails),
/// accumulating into T and writing back with the post-op. Bit-deterministic
/// for a fixed schedule; the correctness oracle for every transform.
inline std::vector<float> reference_execute(const LoopIR& ir, std::span<const float> a,
                                            std::span<const float> b) {
  const NestInfo& info = *ir.info;
  if (static_cast<std::int64_t>(a.size()) != info.layout_a.size ||
      static_cast<std::int64_t>(b.size()) != info.layout_b.size) {
    throw ShapeError("operand sizes do not match spec extents");
  }
  std::vector<float> t(static_cast<std::size_t>(info.layout_t.size), 0.0f);
  std::vector<float> out(static_cast<std::size_t>(info.layout_out.size), 0.0f);
  for (const auto& p : detail::build_plans(ir, NestKind::compute)) {
    detail::run_compute_plan(p, a.data(), b.data(), t.data());
  }
  for (const auto& p : detail::build_plans(ir, NestKind::writeback)) {
    detail::run_writeback_plan(p, t.data(), out.data(), info.spec.post_op);
  }
  return out;
}

/// Measures the schedule on this machine: 20 warm-up executions, then
/// `timed_iters` samples, reporting the fastest. Samples shorter than
/// min_sample_ms are automatically lengthened by running the nest several
/// times per sample. Inputs are seeded pseudorandomly in [-1, 1).
inline EvalResult timed_execute(const LoopIR& ir, const EvalConfig& cfg = {}) {
  using clock = std::chrono::steady_clock;
  const NestInfo& info = *ir.info;

  std::mt19937 rng(static_cast<std::uint32_t>(cfg.input_seed));
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> a(static_cast<std::size_t>(info.layout_a.size));
  std::vector<float> b(static_cast<std::size_t>(info.layout_b.size));
  for (auto& x : a) x = dist(rng);
  for (auto& x : b) x = dist(rng);
  std::vector<float> t(static_cast<std::size_t>(info.layout_t.size));
  std::vector<float> out(static_cast<std::size_t>(info.layout_out.size));

  const auto cplans = detail::build_plans(ir, NestKind::compute);
  const auto wplans = detail::build_plans(ir, NestKind::writeback);
  auto execute_once = [&] {
    std::fill(t.begin(), t.end(), 0.0f);
    for (const auto& p : cplans) detail::run_compute_plan(p, a.data(), b.data(), t.data());
    for (const auto& p : wplans) detail::run_writeback_plan(p, t.data(), out.data(), info.spec.post_op);
    detail::do_not_optimize(out.data());
  };
  auto sample_ns = [&](std::int64_t reps) {
    const auto t0 = clock::now();
    for (std::int64_t i = 0; i < reps; ++i) execute_once();
    return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
  };

  // Calibrate repetitions so one sample clears the timer floor.
  const auto min_ns = static_cast<std::int64_t>(cfg.min_sample_ms * 1e6);
  std::int64_t reps = 1;
  while (reps < (std::int64_t{1} << 30)) {
    const std::int64_t ns = sample_ns(reps);
    if (ns >= min_ns) break;
    const double scale = static_cast<double>(min_ns) / static_cast<double>(std::max<std::int64_t>(ns, 1));
    reps = std::max(reps * 2, static_cast<std::int64_t>(static_cast<double>(reps) * scale) + 1);
  }

  for (int i = 0; i < cfg.warmup_iters; ++i) execute_once();

  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  for (int s = 0; s < cfg.timed_iters; ++s) {
    best = std::min(best, sample_ns(reps) / reps);
  }
  best = std::max<std::int64_t>(best, 1);

  const std::int64_t flops = flop_count(info.spec);
  return {static_cast<double>(flops) / static_cast<double>(best), best, flops,
          BackendKind::timed};
}

namespace detail {

// Deterministic cache proxy, published constants:
//   element 4 B, cache line 64 B, L1 32 KiB, L2 1 MiB,
//   access cost 1 / 10 / 40 / 100 cycles, clock 1 GHz (1 cycle = 1 ns).
inline constexpr std::int64_t kElemBytes = 4;
inline constexpr std::int64_t kCacheLineBytes = 64;
inline constexpr std::int64_t kL1Bytes = 32 * 1024;
inline constexpr std::int64_t kL2Bytes = 1024 * 1024;

inline std::int64_t miss_penalty(std::int64_t stride_elems, std::int64_t trips) {
  if (stride_elems <= 0) return 0;
  const std::int64_t bytes = stride_elems * kElemBytes;
  if (bytes <= kCacheLineBytes) return 1;
  const std::int64_t span = bytes * trips;  // bytes swept by one full pass
  if (span <= kL1Bytes) return 10;
  if (span <= kL2Bytes) return 40;
  return 100;
}

}  // namespace detail

/// Deterministic analytic backend: simulated cycles = sum over loops of
/// (trip product of the loop and everything above it in its nest) times
/// the summed access penalties of the tensors it strides over. Strides are
/// the executed ones (unit * base stride). Pure in the structural key;
/// cursor position is ignored.
inline EvalResult cost_model_execute(const LoopIR& ir) {
  const NestInfo& info = *ir.info;
  auto trips = [](const LoopDesc& l) { return l.size + (l.tail > 0 ? 1 : 0); };

  std::int64_t cycles = 0;
  auto accumulate_nest = [&](std::size_t begin, std::size_t end, bool compute) {
    std::int64_t outer = 1;
    for (std::size_t i = begin; i < end; ++i) {
      const LoopDesc& loop = ir.loops[i];
      outer *= trips(loop);
      const std::int64_t t = trips(loop);
      std::int64_t access = 0;
      if (compute) {
        access += detail::miss_penalty(loop.unit * info.layout_a.stride(loop.var), t);
        access += detail::miss_penalty(loop.unit * info.layout_b.stride(loop.var), t);
        access += detail::miss_penalty(loop.unit * info.layout_t.stride(loop.var), t);
      } else {
        access += detail::miss_penalty(loop.unit * info.layout_t.stride(loop.var), t);
        access += detail::miss_penalty(loop.unit * info.layout_out.stride(loop.var), t);
      }
      cycles += outer * access;
    }
  };
  accumulate_nest(0, ir.compute_loops, true);
  accumulate_nest(ir.compute_loops, ir.loops.size(), false);

  cycles = std::max<std::int64_t>(cycles, 1);
  const std::int64_t flops = flop_count(info.spec);
  return {static_cast<double>(flops) / static_cast<double>(cycles), cycles, flops,
          BackendKind::costmodel};
}

/// Empirical peak for the timed backend (register-resident FMA saturation
/// kernel, best of 10 trials); the analytic 2 flops/cycle bound for the
/// cost model.
inline PeakEstimate measure_peak(BackendKind kind, const EvalConfig& cfg = {}) {
  if (kind == BackendKind::costmodel) {
    return {2.0, "analytic: 2 flops/cycle at 1 GHz, zero miss penalty"};
  }
  using clock = std::chrono::steady_clock;
  constexpr int kLanes = 16;
  float acc[kLanes];
  for (int j = 0; j < kLanes; ++j) acc[j] = static_cast<float>(j) * 0.25f;
  const float mul = 0.999f;
  const float add = 0.001f;

  auto run = [&](std::int64_t iters) {
    const auto t0 = clock::now();
    for (std::int64_t i = 0; i < iters; ++i) {
      for (int j = 0; j < kLanes; ++j) acc[j] = acc[j] * mul + add;
    }
    detail::do_not_optimize(acc);
    return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
  };

  std::int64_t iters = 1 << 12;
  while (run(iters) < 2'000'000 && iters < (std::int64_t{1} << 40)) iters *= 2;

  double best = 0.0;
  const int trials = std::max(1, cfg.timed_iters);
  for (int s = 0; s < trials; ++s) {
    const std::int64_t ns = std::max<std::int64_t>(run(iters), 1);
    best = std::max(best, static_cast<double>(2 * kLanes * iters) / static_cast<double>(ns));
  }
  return {best, "fma saturation kernel (" + std::to_string(kLanes) + " lanes), best of " +
                    std::to_string(trials) + " trials"};
}

/// Instrumented evaluation facade. Counts backend calls (searches and the
/// environment are audited against call budgets) and owns the peak
/// estimate, re-measuring when a result exceeds it.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual BackendKind kind() const = 0;

  EvalResult evaluate(const LoopIR& ir) {
    ++calls_;
    EvalResult r = run(ir);
    if (r.gflops > peak().gflops_peak) {
      std::fprintf(stderr, "[nestopt] warning: measured %.3f GFLOPS above peak %.3f; re-measuring peak\n",
                   r.gflops, peak_->gflops_peak);
      PeakEstimate again = remeasure();
      peak_->gflops_peak = std::max(again.gflops_peak, r.gflops);
      peak_->method = again.method;
    }
    return r;
  }

  const PeakEstimate& peak() {
    if (!peak_) peak_ = remeasure();
    return *peak_;
  }

  std::int64_t calls() const { return calls_; }
  void reset_calls() { calls_ = 0; }

 protected:
  virtual EvalResult run(const LoopIR& ir) = 0;
  virtual PeakEstimate remeasure() = 0;

 private:
  std::optional<PeakEstimate> peak_;
  std::int64_t calls_ = 0;
};

class CostModelEvaluator final : public Evaluator {
 public:
  BackendKind kind() const override { return BackendKind::costmodel; }

 protected:
  EvalResult run(const LoopIR& ir) override { return cost_model_execute(ir); }
  PeakEstimate remeasure() override { return measure_peak(BackendKind::costmodel); }
};

class TimedEvaluator final : public Evaluator {
 public:
  explicit TimedEvaluator(EvalConfig cfg = {}) : cfg_(cfg) { cfg_.backend = BackendKind::timed; }
  BackendKind kind() const override { return BackendKind::timed; }
  const EvalConfig& config() const { return cfg_; }

 protected:
  EvalResult run(const LoopIR& ir) override { return timed_execute(ir, cfg_); }
  PeakEstimate remeasure() override { return measure_peak(BackendKind::timed, cfg_); }

 private:
  EvalConfig cfg_;
};

inline std::unique_ptr<Evaluator> make_evaluator(const EvalConfig& cfg) {
  if (cfg.backend == BackendKind::timed) return std::make_unique<TimedEvaluator>(cfg);
  return std::make_unique<CostModelEvaluator>();
}

}  // namespace nestopt
