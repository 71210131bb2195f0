#include "oracle.h"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace trace::testing {

namespace {

void append_pair(Key& k, uint32_t attr, uint32_t value) {
  char buf[8];
  std::memcpy(buf, &attr, 4);
  std::memcpy(buf + 4, &value, 4);
  k.append(buf, 8);
}

void combine(const std::vector<std::pair<uint32_t, uint32_t>>& pairs, size_t next, unsigned left, Key& current,
             std::vector<Key>& out) {
  out.push_back(current);
  if (left == 0) return;
  for (size_t i = next; i < pairs.size(); ++i) {
    const size_t mark = current.size();
    append_pair(current, pairs[i].first, pairs[i].second);
    combine(pairs, i + 1, left - 1, current, out);
    current.resize(mark);
  }
}

// Howard Hinnant's days_from_civil / civil_from_days.
int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

int64_t floor_div(int64_t a, int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

}  // namespace

Key key_of(const Slice& s) {
  Key k;
  for (const SlicePair& p : s) append_pair(k, p.attr, p.value);
  return k;
}

Slice slice_of(const Key& k) {
  std::vector<SlicePair> pairs;
  for (size_t i = 0; i + 8 <= k.size(); i += 8) {
    SlicePair p;
    std::memcpy(&p.attr, k.data() + i, 4);
    std::memcpy(&p.value, k.data() + i + 4, 4);
    pairs.push_back(p);
  }
  return Slice::canonicalize(pairs);
}

std::vector<Key> subsets(const std::vector<ValueId>& attrs, unsigned depth) {
  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  for (uint32_t a = 0; a < attrs.size(); ++a) {
    if (attrs[a] != kNullValue) pairs.emplace_back(a, attrs[a]);
  }
  std::vector<Key> out;
  Key current;
  combine(pairs, 0, depth, current, out);
  return out;
}

int64_t oracle_bucket_start(int64_t ts, Granularity g) {
  const int64_t day = floor_div(ts, 86400);
  switch (g) {
    case Granularity::kMinute: return floor_div(ts, 60) * 60;
    case Granularity::kHour: return floor_div(ts, 3600) * 3600;
    case Granularity::kDay: return day * 86400;
    case Granularity::kWeek: {
      // 1970-01-01 was a Thursday; Monday-based weekday index.
      const int64_t weekday = ((day % 7) + 7 + 3) % 7;
      return (day - weekday) * 86400;
    }
    case Granularity::kMonth: {
      int64_t y;
      unsigned m, d;
      civil_from_days(day, y, m, d);
      return days_from_civil(y, m, 1) * 86400;
    }
    case Granularity::kAll: return 0;
  }
  throw std::logic_error("granularity");
}

ExactCube::ExactCube(RecordSource& source, const Weight& weight, unsigned depth, std::vector<Granularity> grans) {
  if (std::find(grans.begin(), grans.end(), Granularity::kAll) == grans.end()) grans.push_back(Granularity::kAll);
  Record r;
  std::string err;
  for (;;) {
    const auto status = source.next(r, &err);
    if (status == RecordSource::Status::kEnd) break;
    if (status == RecordSource::Status::kBadRow) continue;
    const double w = weight(r);
    const std::vector<Key> keys = subsets(r.attrs, depth);
    for (Granularity g : grans) {
      Values& values = buckets_[{g, oracle_bucket_start(r.timestamp, g)}];
      for (const Key& k : keys) values[k] += w;
    }
  }
}

const ExactCube::Values& ExactCube::bucket(Granularity g, int64_t start) const {
  static const Values empty;
  auto it = buckets_.find({g, start});
  return it == buckets_.end() ? empty : it->second;
}

double ExactCube::value(Granularity g, int64_t start, const Slice& s) const {
  const Values& values = bucket(g, start);
  auto it = values.find(key_of(s));
  return it == values.end() ? 0.0 : it->second;
}

std::vector<int64_t> ExactCube::starts(Granularity g) const {
  std::vector<int64_t> out;
  for (const auto& [key, values] : buckets_) {
    if (key.first == g) out.push_back(key.second);
  }
  return out;
}

std::vector<Key> ExactCube::top(Granularity g, int64_t start, size_t k) const {
  std::vector<std::pair<double, Key>> all;
  for (const auto& [key, v] : bucket(g, start)) all.emplace_back(v, key);
  const size_t m = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<ptrdiff_t>(m), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<Key> out;
  for (size_t i = 0; i < m; ++i) out.push_back(all[i].second);
  return out;
}

std::unordered_map<Key, size_t> exact_distinct(RecordSource& source, unsigned depth, Granularity g, int64_t start,
                                               const std::unordered_set<Key>& wanted, size_t distinct_slot) {
  std::unordered_map<Key, std::unordered_set<uint64_t>> sets;
  Record r;
  std::string err;
  for (;;) {
    const auto status = source.next(r, &err);
    if (status == RecordSource::Status::kEnd) break;
    if (status == RecordSource::Status::kBadRow) continue;
    if (oracle_bucket_start(r.timestamp, g) != start) continue;
    const auto& item = r.distinct_keys.at(distinct_slot);
    if (!item) continue;
    for (const Key& k : subsets(r.attrs, depth)) {
      if (wanted.count(k)) sets[k].insert(*item);
    }
  }
  std::unordered_map<Key, size_t> out;
  for (const Key& k : wanted) out[k] = sets.count(k) ? sets[k].size() : 0;
  return out;
}

}  // namespace trace::testing
