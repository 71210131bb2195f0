#include "trace/builder.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>

#include "trace/errors.h"
#include "trace/store.h"

namespace trace {

namespace {

constexpr TimeBucket kAllBucket{Granularity::kAll, 0};
constexpr size_t kMaxBadRowSamples = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string make_uuid() {
  std::random_device rd;
  std::mt19937_64 gen((uint64_t(rd()) << 32) ^ rd());
  uint64_t hi = gen(), lo = gen();
  hi = (hi & ~0xF000ULL) | 0x4000ULL;                      // version 4
  lo = (lo & ~(0xC000ULL << 48)) | (0x8000ULL << 48);      // RFC 4122 variant
  char buf[37];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", unsigned(hi >> 32), unsigned((hi >> 16) & 0xFFFF),
                unsigned(hi & 0xFFFF), unsigned(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_summary_kind(MetricKind k) { return k == MetricKind::kDistinctCount || k == MetricKind::kPercentile; }

}  // namespace

nlohmann::json BuildStats::to_json() const {
  nlohmann::json phases = nlohmann::json::object();
  for (const auto& [name, secs] : phase_seconds) phases[name] = secs;
  return {{"rows_read", rows_read},         {"bad_rows", bad_rows}, {"slices_generated", slices_generated},
          {"prunes", prunes},               {"passes", passes},     {"multipass", multipass},
          {"bad_row_samples", bad_row_samples}, {"phase_seconds", phases}};
}

FDGraph detect_fds(std::span<const Record> sample, size_t num_attributes, double violation_tolerance) {
  const size_t d = num_attributes;
  std::vector<ValueId> max_value(d, 0);
  for (const Record& r : sample) {
    for (size_t a = 0; a < d && a < r.attrs.size(); ++a) {
      if (r.attrs[a] != kNullValue) max_value[a] = std::max(max_value[a], r.attrs[a] + 1);
    }
  }

  std::vector<std::pair<AttributeId, AttributeId>> raw;
  std::vector<ValueId> first_b;
  absl::flat_hash_map<uint64_t, uint64_t> pair_counts;
  absl::flat_hash_map<ValueId, std::pair<uint64_t, uint64_t>> per_a;  // total, largest group
  for (AttributeId a = 0; a < d; ++a) {
    for (AttributeId b = 0; b < d; ++b) {
      if (a == b) continue;
      uint64_t both = 0;
      bool holds = true;
      if (violation_tolerance == 0) {
        first_b.assign(max_value[a], kNullValue);
        for (const Record& r : sample) {
          const ValueId va = r.attrs[a], vb = r.attrs[b];
          if (va == kNullValue || vb == kNullValue) continue;
          ++both;
          if (first_b[va] == kNullValue) {
            first_b[va] = vb;
          } else if (first_b[va] != vb) {
            holds = false;
            break;
          }
        }
      } else {
        pair_counts.clear();
        per_a.clear();
        for (const Record& r : sample) {
          const ValueId va = r.attrs[a], vb = r.attrs[b];
          if (va == kNullValue || vb == kNullValue) continue;
          ++both;
          ++pair_counts[(uint64_t(va) << 32) | vb];
        }
        for (const auto& [key, count] : pair_counts) {
          auto& [total, largest] = per_a[ValueId(key >> 32)];
          total += count;
          largest = std::max(largest, count);
        }
        uint64_t violations = 0;
        for (const auto& [va, tl] : per_a) violations += tl.first - tl.second;
        holds = double(violations) <= violation_tolerance * double(both);
      }
      if (holds && both > 0) raw.emplace_back(a, b);
    }
  }

  // Mutually determining attributes would form cycles; orient each such pair
  // from the lower id to the higher one.
  std::vector<bool> reach(d * d, false);
  for (auto [a, b] : raw) reach[a * d + b] = true;
  for (size_t k = 0; k < d; ++k)
    for (size_t i = 0; i < d; ++i)
      if (reach[i * d + k])
        for (size_t j = 0; j < d; ++j)
          if (reach[k * d + j]) reach[i * d + j] = true;
  std::vector<std::pair<AttributeId, AttributeId>> acyclic;
  for (auto [a, b] : raw) {
    if (a > b && reach[b * d + a]) continue;
    acyclic.emplace_back(a, b);
  }
  return FDGraph(d, transitive_reduction(d, acyclic));
}

FDGraph detect_fds(RecordSource& sample, const CubeConfig& cfg) {
  std::vector<Record> rows;
  Record r;
  std::string err;
  RecordSource::Status st;
  while (rows.size() < cfg.fd_sample_size && (st = sample.next(r, &err)) != RecordSource::Status::kEnd) {
    if (st == RecordSource::Status::kRecord && r.attrs.size() == cfg.attributes.size()) rows.push_back(r);
  }
  return detect_fds(rows, cfg.attributes.size(), cfg.fd_violation_tolerance);
}

std::vector<Slice> union_slice_sets(std::span<const TopNSketch* const> sketches) {
  SliceMap<bool> seen;
  std::vector<Slice> out;
  for (const TopNSketch* sk : sketches) {
    for (const auto& [slice, e] : sk->entries()) {
      if (seen.emplace(slice, true).second) out.push_back(slice);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CubeBuilder::CubeBuilder(RecordSource& source, const CubeConfig& cfg)
    : source_(source), cfg_(cfg), catalog_(cfg.metrics), schema_(Schema::from_config(cfg)) {
  cfg_.validate();
  for (MetricId id : catalog_.base_ids()) {
    const MetricDef& def = catalog_.at(id);
    Base b{id, def.kind, def.sign};
    b.p = def.p;
    if (def.kind == MetricKind::kSum || def.kind == MetricKind::kPercentile) b.numeric_slot = schema_.numeric_index(def.field);
    if (def.kind == MetricKind::kDistinctCount) b.distinct_slot = schema_.distinct_index(def.field);
    bases_.push_back(b);
  }
  tie_key_ = [fmt = SliceFormatter(source_.dictionaries())](const Slice& s) { return fmt.render(s); };
  sketches_.resize(bases_.size());
  refined_.resize(bases_.size());
  weights_.resize(bases_.size());
}

bool CubeBuilder::weigh(const Record& r, std::string* error) {
  if (r.attrs.size() != cfg_.attributes.size()) {
    *error = "record has " + std::to_string(r.attrs.size()) + " attributes, expected " +
             std::to_string(cfg_.attributes.size());
    return false;
  }
  for (size_t i = 0; i < bases_.size(); ++i) {
    const Base& b = bases_[i];
    if (b.kind != MetricKind::kSum) {
      weights_[i] = 1;
      continue;
    }
    double v = r.measures.at(b.numeric_slot);
    if (is_null_measure(v)) v = 0;
    if (!std::isfinite(v)) {
      *error = "non-finite value in field '" + schema_.numeric_fields[b.numeric_slot] + "'";
      return false;
    }
    switch (b.sign) {
      case SignPart::kWhole:
        if (v < 0) {
          *error = "negative value " + std::to_string(v) + " for SUM metric '" + catalog_.at(b.id).name +
                   "' (declare it with sign_split)";
          return false;
        }
        weights_[i] = v;
        break;
      case SignPart::kPositive: weights_[i] = v > 0 ? v : 0; break;
      case SignPart::kNegative: weights_[i] = v < 0 ? -v : 0; break;
    }
  }
  return true;
}

template <typename OnRecord>
void CubeBuilder::scan(OnRecord&& on_record) {
  if (scanned_) source_.rewind();
  scanned_ = true;
  const bool count = !counted_;
  counted_ = true;
  ++stats_.passes;
  Record r;
  std::string err;
  RecordSource::Status st;
  while ((st = source_.next(r, &err)) != RecordSource::Status::kEnd) {
    bool ok = st == RecordSource::Status::kRecord && weigh(r, &err);
    if (!ok) {
      if (count) {
        ++stats_.bad_rows;
        if (stats_.bad_row_samples.size() < kMaxBadRowSamples) stats_.bad_row_samples.push_back(err);
      }
      continue;
    }
    if (count) ++stats_.rows_read;
    on_record(r);
  }
  if (count) check_bad_rows();
}

void CubeBuilder::check_bad_rows() const {
  const uint64_t seen = stats_.rows_read + stats_.bad_rows;
  if (stats_.bad_rows > 0 && double(stats_.bad_rows) > cfg_.max_bad_row_fraction * double(seen)) {
    std::string msg = std::to_string(stats_.bad_rows) + " of " + std::to_string(seen) +
                      " rows are malformed, above the allowed fraction " + std::to_string(cfg_.max_bad_row_fraction);
    if (!stats_.bad_row_samples.empty()) msg += "; first error: " + stats_.bad_row_samples.front();
    throw ParseError(msg);
  }
}

TopNSketch& CubeBuilder::sketch_in(SketchMap& map, const TimeBucket& b) {
  auto it = map.find(b);
  if (it == map.end()) it = map.emplace(b, TopNSketch(cfg_.n, cfg_.overflow_factor, tie_key_)).first;
  return it->second;
}

void CubeBuilder::time_phase(const std::string& name, double seconds) {
  stats_.phase_seconds.emplace_back(name, seconds);
}

void CubeBuilder::detect_dependencies() {
  auto start = Clock::now();
  if (scanned_) source_.rewind();
  scanned_ = true;
  ++stats_.passes;
  fds_ = trace::detect_fds(source_, cfg_);
  time_phase("fd_detection", seconds_since(start));
}

void CubeBuilder::run_single_pass() {
  auto start = Clock::now();
  const size_t nb = bases_.size();
  std::vector<TopNSketch*> day(nb), all(nb);
  for (size_t i = 0; i < nb; ++i) all[i] = &sketch_in(sketches_[i], kAllBucket);
  TimeBucket current{};
  bool have_bucket = false;
  uint64_t generated = 0;

  scan([&](const Record& r) {
    const TimeBucket b = bucketize(r.timestamp, cfg_.granularity);
    if (!have_bucket || b != current) {
      for (size_t i = 0; i < nb; ++i) day[i] = &sketch_in(sketches_[i], b);
      current = b;
      have_bucket = true;
    }
    for_each_slice(r.attrs, cfg_.max_depth, fds_, [&](const Slice& s) {
      ++generated;
      for (size_t i = 0; i < nb; ++i) {
        day[i]->update(s, weights_[i]);
        all[i]->update(s, weights_[i]);
      }
    });
  });

  for (auto& map : sketches_)
    for (auto& [b, sk] : map) sk.prune();
  stats_.slices_generated += generated * 2 * nb;
  time_phase("single_pass", seconds_since(start));
}

void CubeBuilder::run_multipass() {
  if (!source_.rescannable()) throw NotRescannable("level-wise build needs a source that can be re-read");
  stats_.multipass = true;
  const size_t nb = bases_.size();
  const size_t d = cfg_.attributes.size();
  const unsigned depth = cfg_.max_depth;
  // levels[k-1][i]: depth-k sketches of base i. Depth 1 also holds [].
  std::vector<std::vector<SketchMap>> levels(depth, std::vector<SketchMap>(nb));

  std::vector<Slice> frontier, next;
  for (unsigned k = 1; k <= depth; ++k) {
    auto start = Clock::now();
    uint64_t generated = 0;
    scan([&](const Record& r) {
      const TimeBucket buckets[2] = {bucketize(r.timestamp, cfg_.granularity), kAllBucket};
      for (size_t i = 0; i < nb; ++i) {
        const double w = weights_[i];
        for (const TimeBucket& b : buckets) {
          TopNSketch& sk = sketch_in(levels[k - 1][i], b);
          if (k == 1) {
            sk.update(Slice(), w);
            ++generated;
            for (AttributeId a = 0; a < d; ++a) {
              if (r.attrs[a] == kNullValue) continue;
              Slice s;
              s.push_back_ordered({a, r.attrs[a]});
              sk.update(s, w);
              ++generated;
            }
            continue;
          }
          // Grow tracked slices one attribute at a time; intermediate levels
          // only keep slices that survived their own pass.
          frontier.clear();
          const TopNSketch& level1 = levels[0][i].at(b);
          for (AttributeId a = 0; a < d; ++a) {
            if (r.attrs[a] == kNullValue) continue;
            Slice s;
            s.push_back_ordered({a, r.attrs[a]});
            if (level1.contains(s)) frontier.push_back(std::move(s));
          }
          for (unsigned j = 2; j <= k && !frontier.empty(); ++j) {
            next.clear();
            const TopNSketch& prev = levels[j - 2][i].at(b);
            const TopNSketch* same = j < k ? &levels[j - 1][i].at(b) : nullptr;
            for (const Slice& p : frontier) {
              for (AttributeId a = p[p.depth() - 1].attr + 1; a < d; ++a) {
                if (r.attrs[a] == kNullValue) continue;
                bool redundant = false;
                if (!fds_.empty()) {
                  for (const SlicePair& q : p) redundant = redundant || fds_.redundant_pair(q.attr, a);
                }
                if (redundant) continue;
                Slice c = p;
                c.push_back_ordered({a, r.attrs[a]});
                if (same) {
                  if (same->contains(c)) next.push_back(std::move(c));
                  continue;
                }
                ++generated;
                bool parents_tracked = true;
                for (size_t drop = 0; drop + 1 < c.depth() && parents_tracked; ++drop) {
                  parents_tracked = prev.contains(c.without(drop));
                }
                if (parents_tracked) sk.update(c, w);
              }
            }
            if (same) frontier.swap(next);
          }
        }
      }
    });
    for (auto& map : levels[k - 1])
      for (auto& [b, sk] : map) sk.prune();
    stats_.slices_generated += generated;
    time_phase("pass_" + std::to_string(k), seconds_since(start));
  }

  for (size_t i = 0; i < nb; ++i) {
    for (auto& [b, sk] : levels[0][i]) {
      TopNSketch combined = sk;
      for (unsigned k = 2; k <= depth; ++k) {
        auto it = levels[k - 1][i].find(b);
        if (it != levels[k - 1][i].end()) combined.absorb_disjoint(it->second);
      }
      combined.prune();
      sketches_[i].insert_or_assign(b, std::move(combined));
    }
  }
}

void CubeBuilder::union_composites() {
  std::vector<std::vector<size_t>> groups;
  for (MetricId c : catalog_.composite_ids()) {
    std::vector<size_t> group;
    for (MetricId op : catalog_.at(c).operands) {
      for (size_t i = 0; i < bases_.size(); ++i)
        if (bases_[i].id == op) group.push_back(i);
    }
    if (group.size() > 1) groups.push_back(std::move(group));
  }
  // A base shared by two composites can pull new slices into a group that
  // was already processed, so repeat until nothing changes.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& group : groups) {
      std::vector<TimeBucket> buckets;
      for (size_t i : group)
        for (const auto& [b, sk] : sketches_[i]) buckets.push_back(b);
      std::sort(buckets.begin(), buckets.end());
      buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
      for (const TimeBucket& b : buckets) {
        std::vector<TopNSketch*> members;
        for (size_t i : group) members.push_back(&sketch_in(sketches_[i], b));
        std::vector<const TopNSketch*> view(members.begin(), members.end());
        const std::vector<Slice> all = union_slice_sets(view);
        for (TopNSketch* sk : members) {
          if (sk->size() == all.size()) continue;
          for (const Slice& s : all) {
            if (sk->contains(s)) continue;
            sk->put(s, TopNSketch::Entry{0, sk->pruned_max(), false});
            changed = true;
          }
        }
      }
    }
  }
}

bool CubeBuilder::needs_refine_pass() const {
  if (cfg_.refine) return true;
  return std::any_of(bases_.begin(), bases_.end(), [](const Base& b) { return is_summary_kind(b.kind); });
}

void CubeBuilder::refine() {
  if (!needs_refine_pass()) return;
  auto start = Clock::now();
  const size_t nb = bases_.size();
  std::vector<size_t> active;
  for (size_t i = 0; i < nb; ++i)
    if (cfg_.refine || is_summary_kind(bases_[i].kind)) active.push_back(i);

  auto fresh_summary = [&](const Base& b) -> Summary {
    if (b.kind == MetricKind::kDistinctCount) return DistinctSummary(cfg_.distinct_k);
    return QuantileSummary(cfg_.quantile_k);
  };

  std::vector<std::map<TimeBucket, Refined>> acc(nb);
  for (size_t i : active) {
    const bool summaries = is_summary_kind(bases_[i].kind);
    for (const auto& [b, sk] : sketches_[i]) {
      Refined& r = acc[i][b];
      r.slot.reserve(sk.size());
      for (const auto& [slice, e] : sk.entries()) r.slot.emplace(slice, uint32_t(r.slot.size()));
      if (summaries) {
        r.summaries.assign(sk.size(), fresh_summary(bases_[i]));
        r.total_summary = fresh_summary(bases_[i]);
      } else {
        r.sums.assign(sk.size(), 0.0);
      }
    }
  }

  std::vector<Refined*> day(nb), all(nb);
  for (size_t i : active) all[i] = &acc[i].at(kAllBucket);
  TimeBucket current{};
  bool have_bucket = false;

  auto feed = [&](const Base& b, const Record& rec, Summary& s) {
    if (b.kind == MetricKind::kDistinctCount) {
      if (const auto& key = rec.distinct_keys.at(b.distinct_slot)) std::get<DistinctSummary>(s).update_hash(*key);
    } else {
      const double v = rec.measures.at(b.numeric_slot);
      if (!is_null_measure(v)) std::get<QuantileSummary>(s).update(v);
    }
  };

  scan([&](const Record& rec) {
    const TimeBucket b = bucketize(rec.timestamp, cfg_.granularity);
    if (!have_bucket || b != current) {
      for (size_t i : active) day[i] = &acc[i].at(b);
      current = b;
      have_bucket = true;
    }
    for (size_t i : active) {
      if (!is_summary_kind(bases_[i].kind)) continue;
      feed(bases_[i], rec, *day[i]->total_summary);
      feed(bases_[i], rec, *all[i]->total_summary);
    }
    for_each_slice(rec.attrs, cfg_.max_depth, fds_, [&](const Slice& s) {
      for (size_t i : active) {
        for (Refined* r : {day[i], all[i]}) {
          auto it = r->slot.find(s);
          if (it == r->slot.end()) continue;
          if (r->summaries.empty()) {
            r->sums[it->second] += weights_[i];
          } else {
            feed(bases_[i], rec, r->summaries[it->second]);
          }
        }
      }
    });
  });

  for (size_t i : active) {
    const Base& base = bases_[i];
    for (auto& [b, r] : acc[i]) {
      TopNSketch& sk = sketches_[i].at(b);
      for (const auto& [slice, idx] : r.slot) {
        if (r.summaries.empty()) {
          sk.set_exact(slice, r.sums[idx]);
        } else if (base.kind == MetricKind::kDistinctCount) {
          sk.set_point(slice, std::get<DistinctSummary>(r.summaries[idx]).estimate());
        } else {
          const auto& q = std::get<QuantileSummary>(r.summaries[idx]);
          sk.set_point(slice, q.count() ? q.query(base.p) : 0.0);
        }
      }
    }
    if (is_summary_kind(base.kind)) refined_[i] = std::move(acc[i]);
  }
  time_phase("refine", seconds_since(start));
}

const TopNSketch* CubeBuilder::sketch(MetricId metric, const TimeBucket& bucket) const {
  for (size_t i = 0; i < bases_.size(); ++i) {
    if (bases_[i].id != metric) continue;
    auto it = sketches_[i].find(bucket);
    return it == sketches_[i].end() ? nullptr : &it->second;
  }
  return nullptr;
}

TopNSketch* CubeBuilder::mutable_sketch(MetricId metric, const TimeBucket& bucket) {
  return const_cast<TopNSketch*>(std::as_const(*this).sketch(metric, bucket));
}

BuildResult CubeBuilder::finish() {
  auto start = Clock::now();
  BuildResult result;
  Cube& cube = result.cube;
  cube.id = make_uuid();
  cube.created_at = utc_now();
  cube.config = cfg_;
  cube.dicts = source_.dictionaries();
  cube.metrics = catalog_;
  cube.fds = fds_;
  const SliceFormatter fmt = cube.formatter();

  for (size_t i = 0; i < bases_.size(); ++i) {
    const Base& base = bases_[i];
    for (const auto& [b, sk] : sketches_[i]) {
      stats_.prunes += sk.prune_count();
      CubeSegment seg;
      seg.metric = base.id;
      seg.bucket = b;
      seg.pruned_max = sk.pruned_max();
      seg.total = sk.total();
      seg.entries.reserve(sk.size());
      for (const auto& [slice, e] : sk.entries()) seg.entries.push_back({slice, BoundedValue{e.observed, e.hi(), e.exact}});

      auto r = refined_[i].find(b);
      if (r != refined_[i].end()) {
        Refined& ref = r->second;
        seg.summaries.reserve(seg.entries.size());
        for (const SegmentEntry& e : seg.entries) seg.summaries.push_back(std::move(ref.summaries[ref.slot.at(e.slice)]));
        seg.total_summary = std::move(ref.total_summary);
        if (base.kind == MetricKind::kDistinctCount) {
          seg.total = std::get<DistinctSummary>(*seg.total_summary).estimate();
        } else {
          const auto& q = std::get<QuantileSummary>(*seg.total_summary);
          seg.total = q.count() ? q.query(base.p) : 0.0;
        }
      }
      sort_segment(seg, fmt);
      cube.segments.emplace(seg.key(), std::move(seg));
    }
  }
  add_rollups(cube);
  time_phase("finish", seconds_since(start));
  result.stats = stats_;
  return result;
}

BuildResult build_cube(RecordSource& source, const CubeConfig& cfg) {
  CubeBuilder builder(source, cfg);
  if (!source.rescannable() && (cfg.detect_fds || builder.needs_refine_pass())) {
    throw NotRescannable("dependency detection and refinement need a source that can be re-read");
  }
  if (cfg.detect_fds) builder.detect_dependencies();
  builder.run_single_pass();
  builder.union_composites();
  builder.refine();
  return builder.finish();
}

BuildResult build_multipass(RecordSource& source, const CubeConfig& cfg) {
  if (!source.rescannable()) throw NotRescannable("level-wise build needs a source that can be re-read");
  CubeBuilder builder(source, cfg);
  if (cfg.detect_fds) builder.detect_dependencies();
  builder.run_multipass();
  builder.union_composites();
  builder.refine();
  return builder.finish();
}

BuildResult build(RecordSource& source, const CubeConfig& cfg) {
  return cfg.use_multipass() ? build_multipass(source, cfg) : build_cube(source, cfg);
}

}  // namespace trace
