#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lodfm/errors.hpp"

namespace lodfm {

/// Sparse feature vector: (index, value) entries with strictly increasing
/// indices. Values are finite and nonzero; explicit zeros are never stored,
/// so per-example work stays proportional to the nonzero count.
class SparseVector {
 public:
  struct Entry {
    std::size_t index;
    double value;
    bool operator==(const Entry&) const = default;
  };

  SparseVector() = default;

  // Sorts by index, drops zeros, rejects NaN/Inf and duplicate indices.
  static SparseVector from_entries(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.index < b.index; });
    SparseVector v;
    v.entries_.reserve(entries.size());
    for (const Entry& e : entries) v.append(e.index, e.value);
    return v;
  }

  // Appends an entry; index must exceed the last stored index. Zero values
  // are skipped.
  void append(std::size_t index, double value) {
    if (!std::isfinite(value))
      throw StructuralError("sparse vector value at index " +
                            std::to_string(index) + " is not finite");
    if (value == 0.0) return;
    if (!entries_.empty() && index <= entries_.back().index)
      throw StructuralError("sparse vector indices must be strictly increasing (" +
                            std::to_string(index) + " after " +
                            std::to_string(entries_.back().index) + ")");
    entries_.push_back(Entry{index, value});
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Largest stored index; vector must be non-empty.
  std::size_t max_index() const { return entries_.back().index; }

  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<Entry> entries_;
};

}  // namespace lodfm
