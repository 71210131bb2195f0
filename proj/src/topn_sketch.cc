#include "trace/topn_sketch.h"

#include <algorithm>
#include <cmath>

#include "trace/errors.h"

namespace trace {

TopNSketch::TopNSketch(size_t capacity, double overflow_factor, TieKey tie_key)
    : capacity_(capacity),
      overflow_factor_(overflow_factor),
      overflow_limit_(static_cast<size_t>(std::floor(double(capacity) * overflow_factor))),
      tie_key_(std::move(tie_key)) {
  if (capacity == 0) throw InvalidArgument("sketch capacity must be at least 1");
  if (!(overflow_factor >= 1.0)) throw InvalidArgument("overflow factor must be >= 1");
  overflow_limit_ = std::max(overflow_limit_, capacity_);
}

void TopNSketch::update(const Slice& s, double v) {
  if (s.empty()) total_ += v;
  auto [it, inserted] = entries_.try_emplace(s, Entry{0, pruned_max_, false});
  it->second.observed += v;
  if (inserted && entries_.size() > overflow_limit_) prune();
}

void TopNSketch::prune() {
  if (entries_.size() <= capacity_) return;
  ++prunes_;

  struct Ranked {
    double hi;
    const Slice* slice;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(entries_.size());
  for (const auto& [slice, e] : entries_) ranked.push_back({e.hi(), &slice});

  // Threshold = capacity-th largest upper bound.
  auto nth = ranked.begin() + static_cast<std::ptrdiff_t>(capacity_ - 1);
  std::nth_element(ranked.begin(), nth, ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.hi > b.hi; });
  const double threshold = nth->hi;

  size_t above = 0;
  std::vector<const Slice*> ties;
  std::vector<Slice> evict;
  double evicted_max = 0;
  for (const Ranked& r : ranked) {
    if (r.hi > threshold) {
      ++above;
    } else if (r.hi == threshold) {
      ties.push_back(r.slice);
    } else {
      evict.push_back(*r.slice);
      evicted_max = std::max(evicted_max, r.hi);
    }
  }
  const size_t keep_ties = capacity_ - above;
  if (keep_ties < ties.size()) {
    std::vector<std::pair<std::string, const Slice*>> keyed;
    keyed.reserve(ties.size());
    for (const Slice* s : ties) keyed.emplace_back(key_of(*s), s);
    auto cut = keyed.begin() + static_cast<std::ptrdiff_t>(keep_ties);
    std::nth_element(keyed.begin(), cut, keyed.end());
    for (auto it = cut; it != keyed.end(); ++it) evict.push_back(*it->second);
    evicted_max = std::max(evicted_max, threshold);
  }
  for (const Slice& s : evict) entries_.erase(s);
  pruned_max_ = std::max(pruned_max_, evicted_max);
}

std::optional<BoundedValue> TopNSketch::estimate(const Slice& s) const {
  auto it = entries_.find(s);
  if (it == entries_.end()) return std::nullopt;
  const Entry& e = it->second;
  return BoundedValue{e.observed, e.hi(), e.exact};
}

TopNSketch TopNSketch::merge(const TopNSketch& a, const TopNSketch& b) {
  if (a.capacity_ != b.capacity_) {
    throw CapacityMismatch("cannot merge sketches of capacity " + std::to_string(a.capacity_) +
                           " and " + std::to_string(b.capacity_));
  }
  TopNSketch out(a.capacity_, a.overflow_factor_, a.tie_key_);
  out.entries_.reserve(a.entries_.size() + b.entries_.size());
  for (const auto& [slice, ea] : a.entries_) {
    Entry merged;
    auto it = b.entries_.find(slice);
    if (it != b.entries_.end()) {
      merged.observed = ea.observed + it->second.observed;
      merged.floor = ea.floor + it->second.floor;
      merged.exact = ea.exact && it->second.exact;
    } else {
      merged.observed = ea.observed;
      merged.floor = ea.floor + b.pruned_max_;
      merged.exact = ea.exact && b.pruned_max_ == 0;
    }
    out.entries_.emplace(slice, merged);
  }
  for (const auto& [slice, eb] : b.entries_) {
    if (a.entries_.contains(slice)) continue;
    Entry merged{eb.observed, eb.floor + a.pruned_max_, eb.exact && a.pruned_max_ == 0};
    out.entries_.emplace(slice, merged);
  }
  out.pruned_max_ = a.pruned_max_ + b.pruned_max_;
  out.total_ = a.total_ + b.total_;
  out.prune();
  return out;
}

void TopNSketch::absorb_disjoint(const TopNSketch& other) {
  for (const auto& [slice, e] : other.entries_) {
    if (!entries_.emplace(slice, e).second) {
      throw InvalidArgument("absorb_disjoint: slice tracked by both sketches");
    }
  }
  pruned_max_ = std::max(pruned_max_, other.pruned_max_);
  total_ += other.total_;
  prunes_ += other.prunes_;
}

void TopNSketch::set_exact(const Slice& s, double value) {
  auto it = entries_.find(s);
  if (it == entries_.end()) throw InvalidArgument("set_exact on untracked slice");
  it->second = Entry{value, 0, true};
}

void TopNSketch::set_point(const Slice& s, double value) {
  auto it = entries_.find(s);
  if (it == entries_.end()) throw InvalidArgument("set_point on untracked slice");
  it->second = Entry{value, 0, false};
}

std::string TopNSketch::key_of(const Slice& s) const {
  if (tie_key_) return tie_key_(s);
  // Big-endian ids so byte order matches id order.
  std::string key;
  key.reserve(s.depth() * 8);
  for (const SlicePair& p : s) {
    for (int shift = 24; shift >= 0; shift -= 8) key.push_back(static_cast<char>((p.attr >> shift) & 0xFF));
    for (int shift = 24; shift >= 0; shift -= 8) key.push_back(static_cast<char>((p.value >> shift) & 0xFF));
  }
  return key;
}

std::vector<std::pair<Slice, BoundedValue>> TopNSketch::sorted_entries() const {
  struct Row {
    double hi;
    std::string key;
    std::pair<Slice, BoundedValue> item;
  };
  std::vector<Row> rows;
  rows.reserve(entries_.size());
  for (const auto& [slice, e] : entries_) {
    rows.push_back({e.hi(), key_of(slice), {slice, BoundedValue{e.observed, e.hi(), e.exact}}});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.hi != b.hi) return a.hi > b.hi;
    return a.key < b.key;
  });
  std::vector<std::pair<Slice, BoundedValue>> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(std::move(r.item));
  return out;
}

}  // namespace trace
