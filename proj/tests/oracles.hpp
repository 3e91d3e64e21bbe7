// Test-only oracles, independent of the implementation paths they check:
// a dense einsum interpreter, an exhaustive search enumerator, and random
// benchmark/action generators.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nestopt/nestopt.hpp"

namespace nestopt::testing {

/// Dense einsum evaluated dimension-by-dimension with double accumulation,
/// never touching LoopIR or the plan machinery.
inline std::vector<float> brute_force_execute(const ContractionSpec& spec,
                                              const std::vector<float>& a,
                                              const std::vector<float>& b) {
  const auto dims = spec.all_dims();
  const TensorLayout la = TensorLayout::row_major(spec.a.dims, spec.extents);
  const TensorLayout lb = TensorLayout::row_major(spec.b.dims, spec.extents);
  const TensorLayout lo = TensorLayout::row_major(spec.output.dims, spec.extents);

  std::vector<double> acc(static_cast<std::size_t>(lo.size), 0.0);
  std::map<std::string, std::int64_t> idx;
  for (const auto& v : dims) idx[v] = 0;

  auto offset = [&](const TensorLayout& layout) {
    std::int64_t off = 0;
    for (const auto& v : layout.dims) off += idx.at(v) * layout.base_strides.at(v);
    return off;
  };

  for (;;) {
    acc[static_cast<std::size_t>(offset(lo))] +=
        static_cast<double>(a[static_cast<std::size_t>(offset(la))]) *
        static_cast<double>(b[static_cast<std::size_t>(offset(lb))]);
    // odometer over dims, last fastest
    std::size_t d = dims.size();
    for (;;) {
      if (d == 0) goto done;
      --d;
      if (++idx[dims[d]] < spec.extent(dims[d])) break;
      idx[dims[d]] = 0;
    }
  }
done:
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    float v = static_cast<float>(acc[i]);
    if (spec.post_op == PostOp::relu && v < 0.0f) v = 0.0f;
    out[i] = v;
  }
  return out;
}

inline double max_abs_diff(const std::vector<float>& x, const std::vector<float>& y) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i])));
  }
  return m;
}

inline double inf_norm(const std::vector<float>& x) {
  double m = 0.0;
  for (float v : x) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

/// max_i |x_i - y_i| <= tol * max(1, ||x||, ||y||): relative to the tensor
/// magnitude, absolute near zero.
inline bool allclose_rel(const std::vector<float>& x, const std::vector<float>& y, double tol) {
  if (x.size() != y.size()) return false;
  return max_abs_diff(x, y) <= tol * std::max({1.0, inf_norm(x), inf_norm(y)});
}

inline std::vector<float> random_tensor(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

/// Random two-operand contraction: 1-2 output vars, 0-2 contraction vars,
/// every output var placed in at least one operand, extents <= max_extent.
inline ContractionSpec random_spec(std::mt19937_64& rng, std::int64_t max_extent) {
  static const std::vector<std::string> pool = {"i", "j", "p", "q"};
  for (;;) {
    const int n_out = 1 + static_cast<int>(rng() % 2);
    const int n_red = static_cast<int>(rng() % 3);
    std::vector<std::string> vars(pool.begin(), pool.begin() + n_out + n_red);

    ContractionSpec spec;
    spec.output.name = "O";
    spec.a.name = "A";
    spec.b.name = "B";
    for (int v = 0; v < n_out + n_red; ++v) {
      spec.extents[vars[static_cast<std::size_t>(v)]] =
          1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_extent));
    }
    for (int v = 0; v < n_out; ++v) {
      spec.output.dims.push_back(vars[static_cast<std::size_t>(v)]);
      switch (rng() % 3) {
        case 0: spec.a.dims.push_back(vars[static_cast<std::size_t>(v)]); break;
        case 1: spec.b.dims.push_back(vars[static_cast<std::size_t>(v)]); break;
        default:
          spec.a.dims.push_back(vars[static_cast<std::size_t>(v)]);
          spec.b.dims.push_back(vars[static_cast<std::size_t>(v)]);
      }
    }
    for (int v = n_out; v < n_out + n_red; ++v) {
      switch (rng() % 3) {
        case 0: spec.a.dims.push_back(vars[static_cast<std::size_t>(v)]); break;
        case 1: spec.b.dims.push_back(vars[static_cast<std::size_t>(v)]); break;
        default:
          spec.a.dims.push_back(vars[static_cast<std::size_t>(v)]);
          spec.b.dims.push_back(vars[static_cast<std::size_t>(v)]);
      }
    }
    if (rng() % 4 == 0) spec.post_op = PostOp::relu;

    // shuffle operand dim order so layouts vary
    for (auto* t : {&spec.a, &spec.b}) {
      for (std::size_t i = t->dims.size(); i > 1; --i) {
        std::swap(t->dims[i - 1], t->dims[rng() % i]);
      }
    }
    try {
      validate(spec);
    } catch (const SemanticError&) {
      continue;
    }
    spec.name = "random";
    return spec;
  }
}

/// Applies `count` actions drawn uniformly from the full action set;
/// illegal picks are absorbed as no-ops, as the environment would.
inline LoopIR random_actions(const LoopIR& root, int count, std::mt19937_64& rng) {
  LoopIR ir = root;
  for (int i = 0; i < count; ++i) {
    const auto a = static_cast<Action>(rng() % kActionCount);
    ir = apply(ir, a).next;
  }
  return ir;
}

/// Exhaustive enumerator: evaluates every state reachable by legal action
/// sequences of length <= depth and returns the best gflops seen.
inline double brute_force_best(const LoopIR& root, int depth, Evaluator& backend,
                               EvalCache& cache) {
  double best = memoized_eval(root, backend, cache).gflops;
  auto rec = [&](auto&& self, const LoopIR& state, int remaining) -> void {
    if (remaining == 0) return;
    for (Action a : all_actions()) {
      ActionOutcome out = apply(state, a);
      if (!out.applied) continue;
      best = std::max(best, memoized_eval(out.next, backend, cache).gflops);
      self(self, out.next, remaining - 1);
    }
  };
  rec(rec, root, depth);
  return best;
}

inline ContractionSpec matmul_spec(int m, int n, int k) {
  return parse_spec("C[m,n] += A[m,k] * B[k,n] | m=" + std::to_string(m) +
                    " n=" + std::to_string(n) + " k=" + std::to_string(k));
}

}  // namespace nestopt::testing
