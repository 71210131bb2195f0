#include "trace/cube.h"

#include <algorithm>
#include <numeric>
#include <set>

namespace trace {

bool CubeSegment::all_exact() const {
  return std::all_of(entries.begin(), entries.end(), [](const SegmentEntry& e) { return e.value.exact; });
}

void CubeSegment::build_index() {
  index_.clear();
  index_.reserve(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) index_.emplace(entries[i].slice, static_cast<uint32_t>(i));
}

const SegmentEntry* CubeSegment::find(const Slice& s) const {
  auto i = index_of(s);
  return i ? &entries[*i] : nullptr;
}

std::optional<size_t> CubeSegment::index_of(const Slice& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const CubeSegment* Cube::find_segment(MetricId metric, const TimeBucket& bucket) const {
  auto it = segments.find(SegmentKey{metric, bucket});
  return it == segments.end() ? nullptr : &it->second;
}

std::vector<TimeBucket> Cube::buckets(MetricId metric, Granularity g) const {
  std::vector<TimeBucket> out;
  auto it = segments.lower_bound(SegmentKey{metric, TimeBucket{g, INT64_MIN}});
  for (; it != segments.end() && it->first.metric == metric && it->first.bucket.granularity == g; ++it) {
    out.push_back(it->first.bucket);
  }
  return out;
}

std::vector<Granularity> Cube::granularities() const {
  std::set<Granularity> gs;
  for (const auto& [key, seg] : segments) gs.insert(key.bucket.granularity);
  return {gs.begin(), gs.end()};
}

void sort_segment(CubeSegment& seg, const SliceFormatter& fmt) {
  const size_t n = seg.entries.size();
  std::vector<std::string> keys(n);
  for (size_t i = 0; i < n; ++i) keys[i] = fmt.render(seg.entries[i].slice);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ha = seg.entries[a].value.hi;
    const double hb = seg.entries[b].value.hi;
    if (ha != hb) return ha > hb;
    return keys[a] < keys[b];
  });
  std::vector<SegmentEntry> entries;
  entries.reserve(n);
  for (size_t i : order) entries.push_back(std::move(seg.entries[i]));
  seg.entries = std::move(entries);
  if (!seg.summaries.empty()) {
    std::vector<Summary> summaries;
    summaries.reserve(n);
    for (size_t i : order) summaries.push_back(std::move(seg.summaries[i]));
    seg.summaries = std::move(summaries);
  }
  seg.build_index();
}

}  // namespace trace
