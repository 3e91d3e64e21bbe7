#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "nestopt/loop_ir.hpp"

namespace nestopt {

inline constexpr int kMaxLoops = 16;
inline constexpr int kFeaturesPerLoop = 20;
inline constexpr int kStrideBins = 16;
inline constexpr int kObservationSize = kMaxLoops * kFeaturesPerLoop;

/// Fixed-length integer state vector: kMaxLoops slots of
/// [cursor-flag, size, tail, compute-flag, 16-bin stride histogram].
using Observation = std::array<std::int32_t, kObservationSize>;

struct OverCapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Access strides per loop, in elements, for each tensor visible in the
/// loop's nest: A, B and the accumulator T in the compute nest; T and the
/// output in the write-back nest. Stride 0 means the loop's iterator does
/// not index that tensor.
struct StrideProfile {
  struct LoopStrides {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::int64_t t = 0;
    std::int64_t out = 0;

    std::vector<std::int64_t> visible(NestKind nest) const {
      if (nest == NestKind::compute) return {a, b, t};
      return {t, out};
    }
  };
  std::vector<LoopStrides> per_loop;
};

/// Stride of loop `i` w.r.t. a tensor: the tensor's base stride for the
/// loop's iterator times the sizes of all same-iterator loops strictly
/// below it in the same nest.
inline StrideProfile loop_strides(const LoopIR& ir) {
  StrideProfile profile;
  profile.per_loop.resize(ir.loops.size());
  for (std::size_t i = 0; i < ir.loops.size(); ++i) {
    const LoopDesc& loop = ir.loops[i];
    std::int64_t below = 1;
    const std::size_t nest_end =
        loop.nest == NestKind::compute ? ir.compute_loops : ir.loops.size();
    for (std::size_t j = i + 1; j < nest_end; ++j) {
      if (ir.loops[j].var == loop.var) below *= ir.loops[j].size;
    }
    auto& entry = profile.per_loop[i];
    if (loop.nest == NestKind::compute) {
      entry.a = ir.info->layout_a.stride(loop.var) * below;
      entry.b = ir.info->layout_b.stride(loop.var) * below;
      entry.t = ir.info->layout_t.stride(loop.var) * below;
    } else {
      entry.t = ir.info->layout_t.stride(loop.var) * below;
      entry.out = ir.info->layout_out.stride(loop.var) * below;
    }
  }
  return profile;
}

/// Alternative histogram weighting kept behind a switch: per_reference
/// counts one unit per tensor touched (the default), per_trip weights each
/// reference by the loop's trip count.
enum class HistWeighting { per_reference, per_trip };

/// Bins strides at powers of two: bin b covers [2^b, 2^{b+1}) and bin 15
/// saturates. Stride-0 entries are not counted (no memory movement along
/// that loop).
inline std::array<std::int32_t, kStrideBins> stride_histogram(
    std::span<const std::int64_t> strides, std::int32_t weight = 1) {
  std::array<std::int32_t, kStrideBins> bins{};
  for (std::int64_t s : strides) {
    if (s < 1) continue;
    int bin = std::bit_width(static_cast<std::uint64_t>(s)) - 1;
    if (bin >= kStrideBins) bin = kStrideBins - 1;
    bins[static_cast<std::size_t>(bin)] += weight;
  }
  return bins;
}

/// Encodes a schedule as the fixed 320-entry observation; slots follow
/// nest order (compute top-to-bottom, then write-back), unused slots are
/// all-zero.
inline Observation encode(const LoopIR& ir,
                          HistWeighting weighting = HistWeighting::per_reference) {
  if (ir.loops.size() > kMaxLoops) {
    throw OverCapacityError("schedule has " + std::to_string(ir.loops.size()) +
                            " loops; observation capacity is " +
                            std::to_string(kMaxLoops));
  }
  Observation obs{};
  StrideProfile profile = loop_strides(ir);
  for (std::size_t i = 0; i < ir.loops.size(); ++i) {
    const LoopDesc& loop = ir.loops[i];
    std::int32_t* slot = obs.data() + i * kFeaturesPerLoop;
    slot[0] = i == ir.cursor ? 1 : 0;
    slot[1] = static_cast<std::int32_t>(loop.size);
    slot[2] = static_cast<std::int32_t>(loop.tail);
    slot[3] = loop.nest == NestKind::compute ? 1 : 0;
    const std::int32_t weight =
        weighting == HistWeighting::per_trip
            ? static_cast<std::int32_t>(loop.size + (loop.tail > 0 ? 1 : 0))
            : 1;
    auto strides = profile.per_loop[i].visible(loop.nest);
    auto bins = stride_histogram(strides, weight);
    for (int b = 0; b < kStrideBins; ++b) slot[4 + b] = bins[static_cast<std::size_t>(b)];
  }
  return obs;
}

}  // namespace nestopt
