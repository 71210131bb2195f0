#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "support/oracle.h"
#include "support/synthetic.h"
#include "trace/builder.h"
#include "trace/errors.h"
#include "trace/query.h"

namespace trace {
namespace {

using testing::ExactCube;
using testing::key_of;

constexpr int64_t kDay0 = 1709251200;  // 2024-03-01
constexpr int64_t kDaySec = 86400;

TimeBucket day(int i) { return {Granularity::kDay, kDay0 + i * kDaySec}; }

CubeConfig shop_config(size_t n = 1000) {
  CubeConfig cfg;
  cfg.attributes = {"state", "device"};
  cfg.time_column = "ts";
  cfg.metrics = {MetricSpec{.name = "revenue", .kind = MetricKind::kSum, .field = "revenue"},
                 MetricSpec{.name = "rows", .kind = MetricKind::kCount},
                 MetricSpec{.name = "avg", .kind = MetricKind::kAverage, .operands = {"revenue", "rows"}}};
  cfg.n = n;
  cfg.max_depth = 2;
  cfg.detect_fds = false;
  return cfg;
}

// Seven days; [state=CA] has rows on days 0-4 only.
Cube weekly_shop() {
  const CubeConfig cfg = shop_config();
  MemorySource src(Schema::from_config(cfg));
  for (int d = 0; d < 7; ++d) {
    const int64_t ts = kDay0 + d * kDaySec + 3600;
    src.add_row(ts, {"NY", "ios"}, {10.0 + d});
    src.add_row(ts, {"WA", "web"}, {4.0});
    if (d < 5) src.add_row(ts, {"CA", "android"}, {7.0});
  }
  return build(src, cfg).cube;
}

Cube pressured(uint64_t seed, size_t n = 20) {
  CubeConfig cfg = testing::synthetic_config(4, 2, n);
  cfg.refine = false;
  testing::SyntheticSource src({.seed = seed, .rows = 3000, .attributes = 4, .cardinality = 6, .zipf_s = 1.1,
                                .span_seconds = 2 * kDaySec},
                               Schema::from_config(cfg));
  return build(src, cfg).cube;
}

TEST(SliceValue, TopLevelIsExactTotal) {
  const Cube cube = weekly_shop();
  const auto v = slice_value(cube, "revenue", day(2), Slice());
  ASSERT_TRUE(v);
  EXPECT_EQ(*v, BoundedValue::point(12 + 4 + 7, true));
}

TEST(SliceValue, TrackedSliceReturnsStoredRange) {
  const Cube cube = pressured(3);
  const CubeSegment* seg = cube.find_segment(cube.metrics.by_name("amount").id, day(0));
  ASSERT_NE(seg, nullptr);
  for (const SegmentEntry& e : seg->entries) {
    const auto v = slice_value(cube, "amount", day(0), e.slice);
    ASSERT_TRUE(v);
    if (e.slice.empty()) {
      EXPECT_EQ(*v, BoundedValue::point(seg->total, true));
    } else {
      EXPECT_EQ(*v, e.value);
    }
  }
}

TEST(SliceValue, UntrackedSliceIsAbsent) {
  const Cube cube = pressured(3);
  const MetricDef& def = cube.metrics.by_name("amount");
  const CubeSegment* seg = cube.find_segment(def.id, day(0));
  ASSERT_GT(seg->pruned_max, 0);
  // Some depth-2 slice over the generated values is not among the entries.
  const SliceFormatter fmt = cube.formatter();
  bool found_absent = false;
  for (int a = 0; a < 6 && !found_absent; ++a) {
    for (int b = 0; b < 6 && !found_absent; ++b) {
      const Slice s = fmt.parse("[a0=v" + std::to_string(a) + ", a1=v" + std::to_string(b) + "]");
      if (seg->find(s)) continue;
      EXPECT_EQ(slice_value(cube, "amount", day(0), s), std::nullopt);
      EXPECT_EQ(value_or_floor(*seg, s), (BoundedValue{0, seg->pruned_max, false}));
      found_absent = true;
    }
  }
  EXPECT_TRUE(found_absent);
}

TEST(SliceValue, UnknownMetricAndBucket) {
  const Cube cube = weekly_shop();
  EXPECT_THROW(slice_value(cube, "profit", day(0), Slice()), UnknownMetric);
  EXPECT_THROW(slice_value(cube, "revenue", day(30), Slice()), UnknownBucket);
}

TEST(TopK, PrefixOfSortedSegment) {
  const Cube cube = pressured(5, 40);
  const CubeSegment* seg = cube.find_segment(cube.metrics.by_name("amount").id, day(1));
  const auto top = topk(cube, "amount", day(1), 3);
  ASSERT_EQ(top.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(top[i].slice, seg->entries[i].slice);
    EXPECT_EQ(top[i].value, seg->entries[i].value);
    EXPECT_EQ(top[i].rank, i + 1);
  }
}

TEST(TopK, WithinKeepsStrictDescendants) {
  const Cube cube = pressured(5, 200);
  const Slice within = cube.formatter().parse("[a0=v0]");
  const auto rows = topk(cube, "amount", day(0), 1000, {.within = within});
  const CubeSegment* seg = cube.find_segment(cube.metrics.by_name("amount").id, day(0));
  size_t expected = 0;
  for (const SegmentEntry& e : seg->entries) {
    if (e.slice.depth() > 1 && e.slice.value_of(0) == within[0].value) ++expected;
  }
  EXPECT_EQ(rows.size(), expected);
  EXPECT_GT(expected, 0u);
  for (const auto& r : rows) {
    EXPECT_GT(r.slice.depth(), 1u);
    EXPECT_EQ(r.slice.value_of(0), within[0].value);
  }
}

TEST(TopK, DepthFilter) {
  const Cube cube = pressured(5, 200);
  for (const auto& r : topk(cube, "amount", day(0), 1000, {.depth = 1})) EXPECT_EQ(r.slice.depth(), 1u);
}

TEST(TopK, SaturationReturnsEveryEntryInStoredOrder) {
  const Cube cube = pressured(6);
  const CubeSegment* seg = cube.find_segment(cube.metrics.by_name("amount").id, day(0));
  const auto rows = topk(cube, "amount", day(0), 1 << 20);
  ASSERT_EQ(rows.size(), seg->entries.size());
  for (size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].slice, seg->entries[i].slice);
}

TEST(TopK, SharesOfNonNegativeMetric) {
  const Cube cube = weekly_shop();
  const auto rows = topk(cube, "revenue", day(0), 100);
  ASSERT_FALSE(rows.empty());
  EXPECT_TRUE(rows[0].slice.empty());
  EXPECT_DOUBLE_EQ(rows[0].share, 1.0);
  for (const auto& r : rows) {
    EXPECT_GE(r.share, 0.0);
    EXPECT_LE(r.share, 1.0);
  }
  // [state=NY] holds 10 of 21.
  const Slice ny = cube.formatter().parse("[state=NY]");
  const auto it = std::find_if(rows.begin(), rows.end(), [&](const SliceReading& r) { return r.slice == ny; });
  ASSERT_NE(it, rows.end());
  EXPECT_DOUBLE_EQ(it->share, 10.0 / 21.0);
}

TEST(TopK, ZeroKIsInvalid) {
  const Cube cube = weekly_shop();
  EXPECT_THROW(topk(cube, "revenue", day(0), 0), InvalidArgument);
}

TEST(Timeseries, TopLevelOverSevenDays) {
  const Cube cube = weekly_shop();
  const auto series = timeseries(cube, "revenue", Slice(), Granularity::kDay, day(0).start, day(6).start);
  ASSERT_EQ(series.size(), 7u);
  for (int d = 0; d < 7; ++d) {
    ASSERT_TRUE(series[d].value);
    EXPECT_EQ(*series[d].value, BoundedValue::point(10.0 + d + 4 + (d < 5 ? 7 : 0), true));
  }
}

TEST(Timeseries, SliceTrackedOnFiveOfSevenDays) {
  const Cube cube = weekly_shop();
  const Slice ca = cube.formatter().parse("[state=CA]");
  const auto series = timeseries(cube, "revenue", ca, Granularity::kDay, day(0).start, day(6).start);
  ASSERT_EQ(series.size(), 7u);
  for (int d = 0; d < 7; ++d) {
    if (d < 5) {
      ASSERT_TRUE(series[d].value);
      EXPECT_EQ(series[d].value->lo, 7);
    } else {
      EXPECT_FALSE(series[d].value);
    }
  }
}

TEST(Timeseries, EmptyAndUncoveredRanges) {
  const Cube cube = weekly_shop();
  EXPECT_TRUE(timeseries(cube, "revenue", Slice(), Granularity::kDay, day(3).start, day(2).start).empty());
  const auto beyond = timeseries(cube, "revenue", Slice(), Granularity::kDay, day(6).start, day(8).start);
  ASSERT_EQ(beyond.size(), 3u);
  EXPECT_TRUE(beyond[0].value);
  EXPECT_FALSE(beyond[1].value);
  EXPECT_EQ(beyond[1].pruned_max, 0);
  EXPECT_FALSE(beyond[2].value);
}

// Division oracle: min and max of num/den over a dense grid of both ranges.
BoundedValue grid_quotient(double nlo, double nhi, double dlo, double dhi) {
  BoundedValue out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), false};
  constexpr int kSteps = 200;
  for (int i = 0; i <= kSteps; ++i) {
    for (int j = 0; j <= kSteps; ++j) {
      const double q = (nlo + (nhi - nlo) * i / kSteps) / (dlo + (dhi - dlo) * j / kSteps);
      out.lo = std::min(out.lo, q);
      out.hi = std::max(out.hi, q);
    }
  }
  return out;
}

TEST(Composite, ExactAverage) {
  EXPECT_EQ(interval_div({100, 100, true}, {20, 20, true}), BoundedValue::point(5, true));
}

TEST(Composite, IntervalAverage) {
  const BoundedValue v = interval_div({90, 110, false}, {10, 11, false});
  const BoundedValue want = grid_quotient(90, 110, 10, 11);
  EXPECT_DOUBLE_EQ(v.lo, want.lo);
  EXPECT_DOUBLE_EQ(v.hi, want.hi);
  EXPECT_NEAR(v.lo, 8.18, 0.005);
  EXPECT_DOUBLE_EQ(v.hi, 11.0);
}

TEST(Composite, SignedDifference) {
  EXPECT_EQ(interval_sub({7, 7, true}, {2, 2, true}), BoundedValue::point(5, true));
  const BoundedValue wide = interval_sub({7, 9, false}, {1, 2, false});
  EXPECT_EQ(wide.lo, 5);
  EXPECT_EQ(wide.hi, 8);
}

TEST(Composite, ZeroInDenominator) {
  EXPECT_THROW(interval_div({1, 2, false}, {0, 3, false}), DivisionUndefined);
  EXPECT_EQ(interval_div({0, 0, true}, {0, 3, false}).hi, 0);
}

TEST(Composite, AverageFromCube) {
  const Cube cube = weekly_shop();
  const auto v = slice_value(cube, "avg", day(0), Slice());
  ASSERT_TRUE(v);
  EXPECT_DOUBLE_EQ(v->lo, 21.0 / 3);
  EXPECT_DOUBLE_EQ(v->hi, 21.0 / 3);
  EXPECT_TRUE(v->exact);
}

TEST(Composite, SignSplitSumContainsTruth) {
  CubeConfig cfg;
  cfg.attributes = {"store"};
  cfg.time_column = "ts";
  cfg.metrics = {MetricSpec{.name = "profit", .kind = MetricKind::kSignedSum, .field = "profit"}};
  cfg.n = 2;
  cfg.max_depth = 1;
  cfg.detect_fds = false;
  cfg.refine = false;
  MemorySource src(Schema::from_config(cfg));
  std::mt19937_64 rng(4);
  std::map<std::string, double> truth;
  for (int i = 0; i < 400; ++i) {
    const std::string store = "s" + std::to_string(rng() % 9);
    const double v = static_cast<double>(static_cast<int>(rng() % 41) - 20);
    src.add_row(kDay0 + 10, {store}, {v});
    truth[store] += v;
  }
  const Cube cube = build(src, cfg).cube;
  const SliceFormatter fmt = cube.formatter();
  for (const auto& [store, t] : truth) {
    const auto v = value_or_floor(cube, cube.metrics.by_name("profit"), day(0), fmt.parse("[store=" + store + "]"));
    ASSERT_TRUE(v);
    EXPECT_LE(v->lo, t) << store;
    EXPECT_GE(v->hi, t) << store;
  }
}

TEST(Diff, IdenticalBucketsContainZero) {
  const Cube cube = pressured(7);
  const auto rows = diff(cube, "amount", day(0), day(0), 1000);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) EXPECT_TRUE(r.delta.contains(0)) << cube.formatter().render(r.slice);
  // Stable order: identical midpoints fall back to slice text.
  const auto again = diff(cube, "amount", day(0), day(0), 1000);
  ASSERT_EQ(again.size(), rows.size());
  for (size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].slice, rows[i].slice);
}

TEST(Diff, PresentOnlyInLaterBucketIsExactDelta) {
  const Cube cube = weekly_shop();
  const Slice ca = cube.formatter().parse("[state=CA]");
  const auto rows = diff(cube, "revenue", day(6), day(4), 100);
  const auto it = std::find_if(rows.begin(), rows.end(), [&](const DiffRow& r) { return r.slice == ca; });
  ASSERT_NE(it, rows.end());
  EXPECT_FALSE(it->value_a);
  ASSERT_TRUE(it->value_b);
  EXPECT_EQ(it->delta.lo, 7);
  EXPECT_EQ(it->delta.hi, 7);
}

TEST(Diff, AntisymmetricUnderSwap) {
  const Cube cube = pressured(8);
  const auto ab = diff(cube, "amount", day(0), day(1), 1 << 20);
  const auto ba = diff(cube, "amount", day(1), day(0), 1 << 20);
  ASSERT_EQ(ab.size(), ba.size());
  SliceMap<BoundedValue> rev;
  for (const auto& r : ba) rev.emplace(r.slice, r.delta);
  for (const auto& r : ab) {
    const auto it = rev.find(r.slice);
    ASSERT_NE(it, rev.end());
    EXPECT_EQ(r.delta.lo, -it->second.hi);
    EXPECT_EQ(r.delta.hi, -it->second.lo);
  }
}

TEST(Diff, DeltaIntervalsContainExactDeltas) {
  for (uint64_t seed : {11u, 12u, 13u}) {
    CubeConfig cfg = testing::synthetic_config(4, 2, 25);
    cfg.refine = false;
    testing::SyntheticSource src({.seed = seed, .rows = 3000, .attributes = 4, .cardinality = 6, .zipf_s = 1.1,
                                  .span_seconds = 2 * kDaySec},
                                 Schema::from_config(cfg));
    const Cube cube = build(src, cfg).cube;
    src.rewind();
    const size_t slot = Schema::from_config(cfg).numeric_index("amount");
    const ExactCube oracle(src, [slot](const Record& r) { return r.measures[slot]; }, 2, {Granularity::kDay});
    auto exact = [&](int d, const Slice& s) {
      const auto& b = oracle.bucket(Granularity::kDay, day(d).start);
      const auto it = b.find(key_of(s));
      return it == b.end() ? 0.0 : it->second;
    };
    for (const auto& r : diff(cube, "amount", day(0), day(1), 1 << 20)) {
      const double truth = exact(1, r.slice) - exact(0, r.slice);
      EXPECT_LE(r.delta.lo, truth);
      EXPECT_GE(r.delta.hi, truth);
    }
  }
}

TEST(Diff, PlantedHalvingRanksFirst) {
  CubeConfig cfg;
  cfg.attributes = {"a", "b", "c"};
  cfg.time_column = "ts";
  cfg.metrics = {MetricSpec{.name = "revenue", .kind = MetricKind::kSum, .field = "revenue"}};
  cfg.n = 100000;
  cfg.max_depth = 3;
  cfg.detect_fds = false;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    MemorySource src(Schema::from_config(cfg));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> level(50, 150);
    std::normal_distribution<double> noise(0, 0.02);
    const int pa = static_cast<int>(rng() % 4), pb = static_cast<int>(rng() % 4);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 4; ++c) {
          const double base = level(rng);
          const std::vector<std::string> attrs = {"x" + std::to_string(a), "y" + std::to_string(b),
                                                  "z" + std::to_string(c)};
          src.add_row(day(0).start, attrs, {base * (1 + noise(rng))});
          const double factor = (a == pa && b == pb) ? 0.5 : 1.0;
          src.add_row(day(1).start, attrs, {base * factor * (1 + noise(rng))});
        }
      }
    }
    const Cube cube = build(src, cfg).cube;

    // Brute-force diff over every depth-2 slice.
    src.rewind();
    const ExactCube oracle(src, [](const Record& r) { return r.measures[0]; }, 3, {Granularity::kDay});
    const auto& d0 = oracle.bucket(Granularity::kDay, day(0).start);
    const auto& d1 = oracle.bucket(Granularity::kDay, day(1).start);
    std::string best;
    double best_mag = -1;
    for (const auto& [key, v1] : d1) {
      if (testing::slice_of(key).depth() != 2) continue;
      const double mag = std::abs(v1 - d0.at(key));
      if (mag > best_mag) best_mag = mag, best = key;
    }
    const Slice planted = cube.formatter().parse("[a=x" + std::to_string(pa) + ", b=y" + std::to_string(pb) + "]");
    EXPECT_EQ(testing::slice_of(best), planted);

    const auto rows = diff(cube, "revenue", day(0), day(1), 5, Ranking::kImpact, {.depth = 2});
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows[0].slice, planted) << "seed " << seed;
  }
}

TEST(Diff, RelativeRankingFavorsSmallBaselines) {
  const CubeConfig cfg = shop_config();
  MemorySource src(Schema::from_config(cfg));
  src.add_row(day(0).start, {"NY", "ios"}, {1000});
  src.add_row(day(1).start, {"NY", "ios"}, {1100});
  src.add_row(day(0).start, {"WA", "web"}, {1});
  src.add_row(day(1).start, {"WA", "web"}, {10});
  const Cube cube = build(src, cfg).cube;
  const SliceFilter depth2{.depth = 2};
  EXPECT_EQ(cube.formatter().render(diff(cube, "revenue", day(0), day(1), 1, Ranking::kImpact, depth2)[0].slice),
            "[device=ios, state=NY]");
  EXPECT_EQ(cube.formatter().render(diff(cube, "revenue", day(0), day(1), 1, Ranking::kRelative, depth2)[0].slice),
            "[device=web, state=WA]");
  EXPECT_EQ(parse_ranking("relative"), Ranking::kRelative);
  EXPECT_THROW(parse_ranking("loudest"), InvalidArgument);
}

}  // namespace
}  // namespace trace
