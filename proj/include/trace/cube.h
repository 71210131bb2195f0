#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "trace/config.h"
#include "trace/distinct_summary.h"
#include "trace/metric.h"
#include "trace/model.h"
#include "trace/quantile_summary.h"
#include "trace/time_bucket.h"
#include "trace/topn_sketch.h"

namespace trace {

struct SegmentEntry {
  Slice slice;
  BoundedValue value;

  friend bool operator==(const SegmentEntry&, const SegmentEntry&) = default;
};

using Summary = std::variant<DistinctSummary, QuantileSummary>;

struct SegmentKey {
  MetricId metric = 0;
  TimeBucket bucket;

  friend bool operator==(const SegmentKey&, const SegmentKey&) = default;
  friend auto operator<=>(const SegmentKey&, const SegmentKey&) = default;
};

// All tracked slices of one base metric in one time bucket. Entries are kept
// sorted by upper bound descending, ties by canonical slice text.
class CubeSegment {
 public:
  MetricId metric = 0;
  TimeBucket bucket;
  std::vector<SegmentEntry> entries;
  double pruned_max = 0;
  double total = 0;
  // DISTINCT_COUNT / PERCENTILE only: one summary per entry plus one for [].
  std::vector<Summary> summaries;
  std::optional<Summary> total_summary;

  SegmentKey key() const { return {metric, bucket}; }
  bool all_exact() const;
  bool has_summaries() const { return total_summary.has_value(); }

  // Index lookups; call build_index() after mutating entries.
  void build_index();
  const SegmentEntry* find(const Slice& s) const;
  std::optional<size_t> index_of(const Slice& s) const;

  friend bool operator==(const CubeSegment& a, const CubeSegment& b) {
    return a.metric == b.metric && a.bucket == b.bucket && a.entries == b.entries &&
           a.pruned_max == b.pruned_max && a.total == b.total && a.summaries == b.summaries &&
           a.total_summary == b.total_summary;
  }

 private:
  SliceMap<uint32_t> index_;
};

struct Cube {
  std::string id;
  std::string created_at;
  CubeConfig config;
  Dictionaries dicts;
  MetricCatalog metrics;
  FDGraph fds;
  std::map<SegmentKey, CubeSegment> segments;

  SliceFormatter formatter() const { return SliceFormatter(dicts); }
  const CubeSegment* find_segment(MetricId metric, const TimeBucket& bucket) const;
  // Buckets with a segment for `metric` at granularity `g`, ascending.
  std::vector<TimeBucket> buckets(MetricId metric, Granularity g) const;
  std::vector<Granularity> granularities() const;

  friend bool operator==(const Cube& a, const Cube& b) {
    return a.id == b.id && a.created_at == b.created_at && a.config == b.config && a.dicts == b.dicts &&
           a.metrics == b.metrics && a.fds == b.fds && a.segments == b.segments;
  }
};

// Sorts entries (and parallel summaries) by hi descending, then canonical text.
void sort_segment(CubeSegment& seg, const SliceFormatter& fmt);

}  // namespace trace
