#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nestopt/contraction.hpp"

namespace nestopt {

enum class NestKind { compute, writeback };

/// One counted loop of the schedule. `size` is the main-partition trip
/// count; `tail` is a remainder of raw iterator values executed after the
/// main partition; `unit` is how far the iterator advances per step. The
/// unit is fixed when a split creates the loop, so reordering loops of the
/// same iterator never changes which values they cover.
struct LoopDesc {
  std::string var;
  std::int64_t size = 1;
  std::int64_t tail = 0;
  NestKind nest = NestKind::compute;
  std::int64_t unit = 1;

  bool operator==(const LoopDesc&) const = default;
};

/// Immutable per-benchmark context shared by all schedules derived from it.
/// T is the accumulation temporary between the compute and write-back
/// nests; it uses the output index order, row-major.
struct NestInfo {
  ContractionSpec spec;
  TensorLayout layout_a;
  TensorLayout layout_b;
  TensorLayout layout_t;
  TensorLayout layout_out;
};

/// The mutable schedule state: an ordered loop list partitioned into a
/// compute-nest prefix and a write-back suffix, plus the cursor the next
/// action targets. Transforms copy; they never mutate in place.
struct LoopIR {
  std::shared_ptr<const NestInfo> info;
  std::vector<LoopDesc> loops;
  std::size_t compute_loops = 0;
  std::size_t cursor = 0;

  const ContractionSpec& spec() const { return info->spec; }
  bool in_compute(std::size_t i) const { return i < compute_loops; }
  const LoopDesc& cursor_loop() const { return loops[cursor]; }
};

inline LoopIR lower(const ContractionSpec& spec) {
  validate(spec);

  auto info = std::make_shared<NestInfo>();
  info->spec = spec;
  info->layout_a = TensorLayout::row_major(spec.a.dims, spec.extents);
  info->layout_b = TensorLayout::row_major(spec.b.dims, spec.extents);
  info->layout_t = TensorLayout::row_major(spec.output.dims, spec.extents);
  info->layout_out = TensorLayout::row_major(spec.output.dims, spec.extents);

  LoopIR ir;
  ir.info = std::move(info);
  for (const auto& v : spec.all_dims()) {
    ir.loops.push_back({v, spec.extent(v), 0, NestKind::compute, 1});
  }
  ir.compute_loops = ir.loops.size();
  for (const auto& v : spec.output.dims) {
    ir.loops.push_back({v, spec.extent(v), 0, NestKind::writeback, 1});
  }
  ir.cursor = 0;
  return ir;
}

/// Deterministic structural key. Cursor position is excluded: performance
/// does not depend on it. Units are included; loop lists that agree on
/// (order, size, tail) can still traverse memory differently when their
/// split histories differ.
inline std::string canonical_key(const LoopIR& ir) {
  std::string key;
  key.reserve(ir.loops.size() * 16);
  for (const auto& l : ir.loops) {
    key += l.var;
    key += ':';
    key += std::to_string(l.size);
    key += ':';
    key += std::to_string(l.tail);
    key += ':';
    key += std::to_string(l.unit);
    key += l.nest == NestKind::compute ? ":c;" : ":w;";
  }
  return key;
}

}  // namespace nestopt
