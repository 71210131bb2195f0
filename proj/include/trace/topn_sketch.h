#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trace/model.h"

namespace trace {

// An interval guaranteed to contain a slice's true aggregate.
struct BoundedValue {
  double lo = 0;
  double hi = 0;
  bool exact = false;

  static BoundedValue point(double v, bool exact) { return {v, v, exact}; }
  double midpoint() const { return (lo + hi) / 2; }
  bool contains(double v) const { return lo <= v && v <= hi; }

  friend bool operator==(const BoundedValue&, const BoundedValue&) = default;
};

// Capacity-bounded slice counter with sound value ranges. A slice first seen
// after a prune starts with floor = pruned_max, so [observed, observed + floor]
// always brackets its true total for non-negative streams.
class TopNSketch {
 public:
  struct Entry {
    double observed = 0;
    double floor = 0;
    bool exact = false;

    double hi() const { return observed + floor; }
  };

  // Sort key that breaks ties between equal upper bounds (ascending). The
  // builder supplies the canonical slice text; the default orders by ids.
  using TieKey = std::function<std::string(const Slice&)>;

  explicit TopNSketch(size_t capacity, double overflow_factor = 2.0, TieKey tie_key = {});

  // `v` must be non-negative. Updating [] also accumulates the exact total.
  void update(const Slice& s, double v);

  // Keeps the `capacity` entries with the largest upper bound.
  void prune();

  std::optional<BoundedValue> estimate(const Slice& s) const;

  // Sums two sketches built over disjoint streams, then prunes to capacity.
  // Throws CapacityMismatch when capacities differ.
  static TopNSketch merge(const TopNSketch& a, const TopNSketch& b);

  // Adds the entries of a sketch whose slice set does not intersect this
  // one (per-depth sketches of a level-wise build). pruned_max becomes the
  // larger of the two; totals add.
  void absorb_disjoint(const TopNSketch& other);

  // Replaces a tracked entry's range with an exact point.
  void set_exact(const Slice& s, double value);
  // Collapses a tracked entry to an approximate point estimate.
  void set_point(const Slice& s, double value);
  // Inserts or overwrites an entry verbatim; used when rehydrating segments.
  void put(const Slice& s, Entry e) { entries_.insert_or_assign(s, e); }
  void set_state(double pruned_max, double total) {
    pruned_max_ = pruned_max;
    total_ = total;
  }

  // Entries sorted by upper bound descending, ties by the tie-break order.
  std::vector<std::pair<Slice, BoundedValue>> sorted_entries() const;

  bool contains(const Slice& s) const { return entries_.contains(s); }
  size_t size() const { return entries_.size(); }
  size_t capacity() const { return capacity_; }
  double overflow_factor() const { return overflow_factor_; }
  double pruned_max() const { return pruned_max_; }
  double total() const { return total_; }
  uint64_t prune_count() const { return prunes_; }
  const SliceMap<Entry>& entries() const { return entries_; }
  const TieKey& tie_key() const { return tie_key_; }
  std::string key_of(const Slice& s) const;

 private:
  size_t capacity_;
  double overflow_factor_;
  size_t overflow_limit_;
  TieKey tie_key_;
  SliceMap<Entry> entries_;
  double pruned_max_ = 0;
  double total_ = 0;
  uint64_t prunes_ = 0;
};

}  // namespace trace
