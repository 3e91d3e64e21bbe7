#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nestopt/loop_ir.hpp"

namespace nestopt {

/// The fixed 10-action vocabulary: cursor moves, adjacent swaps, and the
/// power-of-two split family. Ids are stable; policy outputs index them.
enum class Action : int {
  up = 0,
  down = 1,
  swap_up = 2,
  swap_down = 3,
  split_2 = 4,
  split_4 = 5,
  split_8 = 6,
  split_16 = 7,
  split_32 = 8,
  split_64 = 9,
};

inline constexpr int kActionCount = 10;

inline constexpr std::array<Action, kActionCount> all_actions() {
  return {Action::up,      Action::down,     Action::swap_up, Action::swap_down,
          Action::split_2, Action::split_4,  Action::split_8, Action::split_16,
          Action::split_32, Action::split_64};
}

inline const char* action_name(Action a) {
  static constexpr const char* names[kActionCount] = {
      "up",      "down",     "swap_up",  "swap_down", "split_2",
      "split_4", "split_8",  "split_16", "split_32",  "split_64"};
  return names[static_cast<int>(a)];
}

inline std::optional<Action> action_from_name(const std::string& name) {
  for (Action a : all_actions()) {
    if (name == action_name(a)) return a;
  }
  return std::nullopt;
}

/// Split factor of a split action, 0 for cursor moves and swaps.
inline std::int64_t split_factor(Action a) {
  switch (a) {
    case Action::split_2: return 2;
    case Action::split_4: return 4;
    case Action::split_8: return 8;
    case Action::split_16: return 16;
    case Action::split_32: return 32;
    case Action::split_64: return 64;
    default: return 0;
  }
}

inline bool is_split(Action a) { return split_factor(a) != 0; }
inline bool is_cursor_move(Action a) {
  return a == Action::up || a == Action::down;
}

/// `applied` is false when the action was illegal and absorbed as a no-op;
/// `changed` is false for cursor-only moves and no-ops.
struct ActionOutcome {
  LoopIR next;
  bool changed = false;
  bool applied = false;
};

/// Applies one action to a schedule. Pure: the input is never mutated.
/// Illegal actions are no-ops rather than errors so every step of a
/// fixed-length episode has a successor state.
inline ActionOutcome apply(const LoopIR& ir, Action a) {
  ActionOutcome out{ir, false, false};
  LoopIR& next = out.next;
  const std::size_t c = ir.cursor;

  switch (a) {
    case Action::up:
      if (c > 0) {
        next.cursor = c - 1;
        out.applied = true;
      }
      return out;
    case Action::down:
      if (c + 1 < ir.loops.size()) {
        next.cursor = c + 1;
        out.applied = true;
      }
      return out;
    case Action::swap_up:
      if (c > 0 && ir.loops[c].nest == ir.loops[c - 1].nest) {
        std::swap(next.loops[c], next.loops[c - 1]);
        next.cursor = c - 1;  // cursor follows the moved loop
        out.applied = true;
        out.changed = true;
      }
      return out;
    case Action::swap_down:
      if (c + 1 < ir.loops.size() && ir.loops[c].nest == ir.loops[c + 1].nest) {
        std::swap(next.loops[c], next.loops[c + 1]);
        next.cursor = c + 1;
        out.applied = true;
        out.changed = true;
      }
      return out;
    default: {
      const std::int64_t k = split_factor(a);
      const LoopDesc& loop = ir.loops[c];
      if (loop.nest == NestKind::writeback) return out;  // write-back stays untiled
      if (loop.size <= k) return out;
      LoopDesc outer = loop;
      outer.size = loop.size / k;
      outer.tail = (loop.size % k) * loop.unit + loop.tail;
      outer.unit = k * loop.unit;
      LoopDesc inner = loop;
      inner.size = k;
      inner.tail = 0;
      next.loops[c] = outer;
      next.loops.insert(next.loops.begin() + static_cast<std::ptrdiff_t>(c) + 1, inner);
      next.compute_loops += 1;
      // cursor stays on the outer loop
      out.applied = true;
      out.changed = true;
      return out;
    }
  }
}

/// Exactly the actions apply() would accept from this state.
inline std::vector<Action> legal_actions(const LoopIR& ir) {
  std::vector<Action> legal;
  for (Action a : all_actions()) {
    if (apply(ir, a).applied) legal.push_back(a);
  }
  return legal;
}

inline std::array<bool, kActionCount> legal_mask(const LoopIR& ir) {
  std::array<bool, kActionCount> mask{};
  for (Action a : all_actions()) {
    mask[static_cast<std::size_t>(a)] = apply(ir, a).applied;
  }
  return mask;
}

/// (structural key, cursor) pair describing a visited state.
struct StateStamp {
  std::string key;
  std::size_t cursor = 0;
  bool operator==(const StateStamp&) const = default;
};

/// True iff the last four states alternate between exactly two distinct
/// (key, cursor) pairs sharing one structural key — the agent is bouncing
/// the cursor without changing the schedule.
inline bool oscillation_detected(std::span<const StateStamp> history) {
  if (history.size() < 4) return false;
  const StateStamp& e0 = history[history.size() - 4];
  const StateStamp& e1 = history[history.size() - 3];
  const StateStamp& e2 = history[history.size() - 2];
  const StateStamp& e3 = history[history.size() - 1];
  return e0 == e2 && e1 == e3 && e0.key == e1.key && !(e0 == e1);
}

/// Rolling window of the most recent states, sized for the detector.
class OscillationWindow {
 public:
  static constexpr std::size_t kWindow = 4;

  void clear() { stamps_.clear(); }
  void push(StateStamp s) {
    stamps_.push_back(std::move(s));
    if (stamps_.size() > kWindow) stamps_.pop_front();
  }
  bool detected() const {
    std::vector<StateStamp> v(stamps_.begin(), stamps_.end());
    return oscillation_detected(v);
  }

 private:
  std::deque<StateStamp> stamps_;
};

}  // namespace nestopt
