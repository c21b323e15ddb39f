#pragma once

#include <vector>

#include "edidub/errors.hpp"

namespace edidub {

/// Discrete speech units at 50 Hz (two per video frame). Values lie in
/// [0, vocab) or equal `null_symbol() == vocab`.
struct UnitSequence {
  std::vector<int> units;
  int vocab = 200;

  int null_symbol() const { return vocab; }
  int size() const { return static_cast<int>(units.size()); }
  bool empty() const { return units.empty(); }
  int frames() const { return size() / 2; }

  static UnitSequence null(int length, int vocab) {
    return UnitSequence{std::vector<int>(length, vocab), vocab};
  }

  bool all_null() const {
    for (int u : units)
      if (u != vocab) return false;
    return true;
  }

  /// Units belonging to frames [begin, end).
  UnitSequence slice_frames(int begin, int end) const {
    require(0 <= begin && begin <= end && 2 * end <= size(), "unit slice out of range");
    return UnitSequence{std::vector<int>(units.begin() + 2 * begin, units.begin() + 2 * end), vocab};
  }

  void validate() const {
    for (int u : units)
      if (u < 0 || u > vocab) throw ArgumentError("unit outside alphabet");
  }

  bool operator==(const UnitSequence&) const = default;
};

}  // namespace edidub
