#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trace/cube.h"

namespace trace {

// Restricts results to strict descendants of `within` and/or one depth.
struct SliceFilter {
  std::optional<Slice> within;
  std::optional<unsigned> depth;

  bool matches(const Slice& s) const;
};

struct SliceReading {
  Slice slice;
  BoundedValue value;
  double share = 0;  // midpoint over the bucket's top-level midpoint
  size_t rank = 0;
  bool undefined = false;  // composite with a denominator range touching 0
};

struct SeriesPoint {
  TimeBucket bucket;
  std::optional<BoundedValue> value;  // nullopt: not tracked in this bucket
  double pruned_max = 0;
  bool undefined = false;
};

enum class Ranking { kImpact, kRelative };
Ranking parse_ranking(std::string_view text);
std::string_view to_string(Ranking r);

struct DiffRow {
  Slice slice;
  std::optional<BoundedValue> value_a, value_b;  // nullopt: ABSENT on that side
  BoundedValue delta;  // contains b - a; ABSENT sides count as [0, pruned_max]
  std::optional<double> z;
  bool undefined = false;
};

inline constexpr double kRelativeEpsilon = 1e-9;

// Interval arithmetic used by composite metrics.
BoundedValue interval_sub(const BoundedValue& a, const BoundedValue& b);
// Throws DivisionUndefined when `den` contains 0 and `num` is not exactly 0.
BoundedValue interval_div(const BoundedValue& num, const BoundedValue& den);

// Metric lookup shared by the query and insight layers. Hidden sign-split
// parts are addressable by name too.
const MetricDef& resolve_metric(const Cube& cube, std::string_view name);

// nullopt means ABSENT. [] always yields the segment total. Throws
// UnknownMetric, UnknownBucket, and DivisionUndefined for composites.
std::optional<BoundedValue> slice_value(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                        const Slice& slice);
std::optional<BoundedValue> composite_value(const Cube& cube, const MetricDef& composite, const TimeBucket& bucket,
                                            const Slice& slice);

// Tracked slices ordered by upper bound. Composites rank SIGNED_SUM by
// pos.hi + neg.hi, AVERAGE/RATIO by the denominator's hi, DIFFERENCE by
// a.hi + b.hi; their share is taken from that ranking quantity.
std::vector<SliceReading> topk(const Cube& cube, std::string_view metric, const TimeBucket& bucket, size_t k,
                               const SliceFilter& filter = {});

// Inclusive range [from, to] at granularity g; an inverted range is empty.
std::vector<SeriesPoint> timeseries(const Cube& cube, std::string_view metric, const Slice& slice, Granularity g,
                                    int64_t from, int64_t to);

// Rows over the union of slices tracked in either bucket, best k first.
// IMPACT ranks by |mid(delta)|, RELATIVE by |mid(delta)| / max(mid(a), eps).
std::vector<DiffRow> diff(const Cube& cube, std::string_view metric, const TimeBucket& a, const TimeBucket& b,
                          size_t k, Ranking ranking = Ranking::kImpact, const SliceFilter& filter = {});

// Every slice tracked by the metric (or by any operand of a composite) in
// `bucket`, in id order. Throws UnknownBucket.
std::vector<Slice> tracked_slices(const Cube& cube, const MetricDef& metric, const TimeBucket& bucket);

// Value used when a slice is untracked: [0, pruned_max], exact if nothing was
// ever pruned. Requires a base metric.
BoundedValue value_or_floor(const CubeSegment& seg, const Slice& slice);

// Like slice_value, but untracked base operands count as [0, pruned_max].
// nullopt only when a composite's division is undefined.
std::optional<BoundedValue> value_or_floor(const Cube& cube, const MetricDef& metric, const TimeBucket& bucket,
                                           const Slice& slice);

// Base segment or UnknownBucket.
const CubeSegment& require_segment(const Cube& cube, MetricId metric, const TimeBucket& bucket);

}  // namespace trace
