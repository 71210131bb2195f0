#include "trace/query.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trace/errors.h"

namespace trace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr BoundedValue kUndefinedValue{-kInf, kInf, false};

bool exact_total(MetricKind k) { return k == MetricKind::kSum || k == MetricKind::kCount; }

std::optional<BoundedValue> base_value(const MetricDef& def, const CubeSegment& seg, const Slice& slice) {
  if (slice.empty()) return BoundedValue::point(seg.total, exact_total(def.kind));
  if (const SegmentEntry* e = seg.find(slice)) return e->value;
  return std::nullopt;
}

BoundedValue combine(const MetricDef& def, const BoundedValue& x, const BoundedValue& y) {
  switch (def.kind) {
    case MetricKind::kSignedSum:
    case MetricKind::kDifference: return interval_sub(x, y);
    case MetricKind::kAverage:
    case MetricKind::kRatio: return interval_div(x, y);
    default: throw InvalidArgument("metric '" + def.name + "' is not a composite");
  }
}

// Composite value with untracked operands replaced by [0, pruned_max].
// Returns nullopt when the division is undefined.
std::optional<BoundedValue> composite_or_floor(const MetricDef& def, const CubeSegment& x, const CubeSegment& y,
                                               const Slice& s, const MetricDef& xdef, const MetricDef& ydef) {
  const BoundedValue vx = s.empty() ? BoundedValue::point(x.total, exact_total(xdef.kind)) : value_or_floor(x, s);
  const BoundedValue vy = s.empty() ? BoundedValue::point(y.total, exact_total(ydef.kind)) : value_or_floor(y, s);
  try {
    return combine(def, vx, vy);
  } catch (const DivisionUndefined&) {
    return std::nullopt;
  }
}

// Ranking quantity for composite rows.
double rank_key(const MetricDef& def, const BoundedValue& x, const BoundedValue& y) {
  switch (def.kind) {
    case MetricKind::kAverage:
    case MetricKind::kRatio: return y.hi;
    default: return x.hi + y.hi;
  }
}

double safe_mid(const BoundedValue& v) { return std::isfinite(v.lo) && std::isfinite(v.hi) ? v.midpoint() : 0.0; }

}  // namespace

bool SliceFilter::matches(const Slice& s) const {
  if (depth && s.depth() != *depth) return false;
  if (within && !is_ancestor(*within, s)) return false;
  return true;
}

Ranking parse_ranking(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "IMPACT") return Ranking::kImpact;
  if (up == "RELATIVE") return Ranking::kRelative;
  throw InvalidArgument("unknown ranking '" + std::string(text) + "' (expected IMPACT or RELATIVE)");
}

std::string_view to_string(Ranking r) { return r == Ranking::kImpact ? "IMPACT" : "RELATIVE"; }

BoundedValue interval_sub(const BoundedValue& a, const BoundedValue& b) {
  return {a.lo - b.hi, a.hi - b.lo, a.exact && b.exact};
}

BoundedValue interval_div(const BoundedValue& num, const BoundedValue& den) {
  if (den.lo <= 0 && den.hi >= 0) {
    if (num.lo == 0 && num.hi == 0) return BoundedValue{0, 0, num.exact && den.exact && den.hi != 0};
    throw DivisionUndefined("denominator range [" + std::to_string(den.lo) + ", " + std::to_string(den.hi) +
                            "] contains zero");
  }
  const double c[4] = {num.lo / den.lo, num.lo / den.hi, num.hi / den.lo, num.hi / den.hi};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4), num.exact && den.exact};
}

const MetricDef& resolve_metric(const Cube& cube, std::string_view name) { return cube.metrics.by_name(name); }

const CubeSegment& require_segment(const Cube& cube, MetricId metric, const TimeBucket& bucket) {
  const CubeSegment* seg = cube.find_segment(metric, bucket);
  if (!seg) {
    throw UnknownBucket("no " + std::string(to_string(bucket.granularity)) + " bucket " + format_bucket(bucket) +
                        " for metric '" + cube.metrics.at(metric).name + "'");
  }
  return *seg;
}

BoundedValue value_or_floor(const CubeSegment& seg, const Slice& slice) {
  if (const SegmentEntry* e = seg.find(slice)) return e->value;
  return BoundedValue{0, seg.pruned_max, seg.pruned_max == 0};
}

std::optional<BoundedValue> value_or_floor(const Cube& cube, const MetricDef& metric, const TimeBucket& bucket,
                                           const Slice& slice) {
  if (metric.base()) {
    const CubeSegment& seg = require_segment(cube, metric.id, bucket);
    return slice.empty() ? *base_value(metric, seg, slice) : value_or_floor(seg, slice);
  }
  const MetricDef& xdef = cube.metrics.at(metric.operands.at(0));
  const MetricDef& ydef = cube.metrics.at(metric.operands.at(1));
  return composite_or_floor(metric, require_segment(cube, xdef.id, bucket), require_segment(cube, ydef.id, bucket),
                            slice, xdef, ydef);
}

std::optional<BoundedValue> composite_value(const Cube& cube, const MetricDef& composite, const TimeBucket& bucket,
                                            const Slice& slice) {
  const MetricDef& xdef = cube.metrics.at(composite.operands.at(0));
  const MetricDef& ydef = cube.metrics.at(composite.operands.at(1));
  auto x = base_value(xdef, require_segment(cube, xdef.id, bucket), slice);
  auto y = base_value(ydef, require_segment(cube, ydef.id, bucket), slice);
  if (!x || !y) return std::nullopt;
  return combine(composite, *x, *y);
}

std::optional<BoundedValue> slice_value(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                        const Slice& slice) {
  const MetricDef& def = resolve_metric(cube, metric);
  if (!def.base()) return composite_value(cube, def, bucket, slice);
  return base_value(def, require_segment(cube, def.id, bucket), slice);
}

std::vector<Slice> tracked_slices(const Cube& cube, const MetricDef& metric, const TimeBucket& bucket) {
  std::vector<Slice> out;
  if (metric.base()) {
    for (const SegmentEntry& e : require_segment(cube, metric.id, bucket).entries) out.push_back(e.slice);
  } else {
    SliceMap<bool> seen;
    for (MetricId op : metric.operands) {
      for (const SegmentEntry& e : require_segment(cube, op, bucket).entries) {
        if (seen.emplace(e.slice, true).second) out.push_back(e.slice);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SliceReading> topk(const Cube& cube, std::string_view metric, const TimeBucket& bucket, size_t k,
                               const SliceFilter& filter) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  const MetricDef& def = resolve_metric(cube, metric);
  std::vector<SliceReading> out;
  if (def.base()) {
    const CubeSegment& seg = require_segment(cube, def.id, bucket);
    for (const SegmentEntry& e : seg.entries) {
      if (out.size() >= k) break;
      if (!filter.matches(e.slice)) continue;
      SliceReading r{e.slice, e.value, seg.total != 0 ? e.value.midpoint() / seg.total : 0.0, out.size() + 1};
      out.push_back(std::move(r));
    }
    return out;
  }

  const MetricDef& xdef = cube.metrics.at(def.operands.at(0));
  const MetricDef& ydef = cube.metrics.at(def.operands.at(1));
  const CubeSegment& x = require_segment(cube, xdef.id, bucket);
  const CubeSegment& y = require_segment(cube, ydef.id, bucket);
  const SliceFormatter fmt = cube.formatter();
  const double top_key = rank_key(def, BoundedValue::point(x.total, true), BoundedValue::point(y.total, true));

  struct Candidate {
    Slice slice;
    double key;
    std::string text;
  };
  std::vector<Candidate> cands;
  for (const Slice& s : tracked_slices(cube, def, bucket)) {
    if (!filter.matches(s)) continue;
    const BoundedValue vx = s.empty() ? BoundedValue::point(x.total, true) : value_or_floor(x, s);
    const BoundedValue vy = s.empty() ? BoundedValue::point(y.total, true) : value_or_floor(y, s);
    cands.push_back({s, rank_key(def, vx, vy), fmt.render(s)});
  }
  auto better = [](const Candidate& a, const Candidate& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.text < b.text;
  };
  const size_t take = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(), better);
  for (size_t i = 0; i < take; ++i) {
    SliceReading r;
    r.slice = cands[i].slice;
    r.rank = i + 1;
    r.share = top_key != 0 ? cands[i].key / top_key : 0.0;
    auto v = composite_or_floor(def, x, y, r.slice, xdef, ydef);
    r.undefined = !v;
    r.value = v.value_or(kUndefinedValue);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SeriesPoint> timeseries(const Cube& cube, std::string_view metric, const Slice& slice, Granularity g,
                                    int64_t from, int64_t to) {
  const MetricDef& def = resolve_metric(cube, metric);
  std::vector<SeriesPoint> out;
  if (from > to) return out;
  const MetricId probe = def.base() ? def.id : def.operands.at(0);
  TimeBucket b = bucketize(from, g);
  for (; b.start <= to; b = next_bucket(b)) {
    SeriesPoint p{b, std::nullopt, 0, false};
    if (const CubeSegment* seg = cube.find_segment(probe, b)) {
      p.pruned_max = seg->pruned_max;
      try {
        p.value = slice_value(cube, metric, b, slice);
      } catch (const DivisionUndefined&) {
        p.undefined = true;
      }
      if (!def.base()) {
        for (MetricId op : def.operands) p.pruned_max = std::max(p.pruned_max, cube.find_segment(op, b)->pruned_max);
      }
    }
    out.push_back(std::move(p));
    if (g == Granularity::kAll) break;
  }
  return out;
}

std::vector<DiffRow> diff(const Cube& cube, std::string_view metric, const TimeBucket& a, const TimeBucket& b,
                          size_t k, Ranking ranking, const SliceFilter& filter) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  const MetricDef& def = resolve_metric(cube, metric);
  std::vector<Slice> slices = tracked_slices(cube, def, a);
  {
    std::vector<Slice> more = tracked_slices(cube, def, b);
    std::vector<Slice> merged;
    std::set_union(slices.begin(), slices.end(), more.begin(), more.end(), std::back_inserter(merged));
    slices = std::move(merged);
  }

  struct Side {
    std::optional<BoundedValue> shown;  // ABSENT stays nullopt
    std::optional<BoundedValue> used;   // nullopt only when undefined
  };
  auto side = [&](const TimeBucket& t, const Slice& s) -> Side {
    if (def.base()) {
      const CubeSegment& seg = require_segment(cube, def.id, t);
      auto v = base_value(def, seg, s);
      return {v, v ? *v : value_or_floor(seg, s)};
    }
    const MetricDef& xdef = cube.metrics.at(def.operands.at(0));
    const MetricDef& ydef = cube.metrics.at(def.operands.at(1));
    const CubeSegment& x = require_segment(cube, xdef.id, t);
    const CubeSegment& y = require_segment(cube, ydef.id, t);
    Side out;
    out.used = composite_or_floor(def, x, y, s, xdef, ydef);
    try {
      out.shown = composite_value(cube, def, t, s);
    } catch (const DivisionUndefined&) {
      out.shown.reset();
    }
    return out;
  };

  const SliceFormatter fmt = cube.formatter();
  struct Ranked {
    DiffRow row;
    double key;
    std::string text;
  };
  std::vector<Ranked> rows;
  for (const Slice& s : slices) {
    if (!filter.matches(s)) continue;
    Side sa = side(a, s), sb = side(b, s);
    Ranked r;
    r.row.slice = s;
    r.row.value_a = sa.shown;
    r.row.value_b = sb.shown;
    if (sa.used && sb.used) {
      r.row.delta = interval_sub(*sb.used, *sa.used);
      const double mag = std::abs(r.row.delta.midpoint());
      r.key = ranking == Ranking::kImpact ? mag : mag / std::max(safe_mid(*sa.used), kRelativeEpsilon);
    } else {
      r.row.undefined = true;
      r.row.delta = kUndefinedValue;
      r.key = -1;  // after every defined row
    }
    r.text = fmt.render(s);
    rows.push_back(std::move(r));
  }
  auto better = [](const Ranked& x, const Ranked& y) {
    if (x.key != y.key) return x.key > y.key;
    return x.text < y.text;
  };
  const size_t take = std::min(k, rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end(), better);
  std::vector<DiffRow> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back(std::move(rows[i].row));
  return out;
}

}  // namespace trace
