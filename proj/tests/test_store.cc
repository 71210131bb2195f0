#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support/oracle.h"
#include "support/synthetic.h"
#include "trace/builder.h"
#include "trace/errors.h"
#include "trace/store.h"

namespace trace {
namespace {

namespace fs = std::filesystem;
using testing::ExactCube;
using testing::SyntheticSource;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("trace-store-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << data;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

Cube mixed_cube(uint64_t seed = 1) {
  CubeConfig cfg = testing::synthetic_config(4, 2, 30);
  cfg.metrics.push_back(MetricSpec{.name = "users", .kind = MetricKind::kDistinctCount, .field = "user"});
  cfg.metrics.push_back(MetricSpec{.name = "p90", .kind = MetricKind::kPercentile, .field = "price", .p = 0.9});
  cfg.metrics.push_back(MetricSpec{.name = "avg", .kind = MetricKind::kAverage, .operands = {"amount", "rows"}});
  SyntheticSource src({.seed = seed, .rows = 2000, .attributes = 4, .cardinality = 8, .zipf_s = 1.1},
                      Schema::from_config(cfg));
  return build(src, cfg).cube;
}

TEST(Crc32c, KnownCheckValue) { EXPECT_EQ(crc32c("123456789"), 0xE3069283u); }

TEST(SegmentCodec, FixedLayout) {
  CubeSegment seg;
  seg.metric = 3;
  seg.bucket = {Granularity::kDay, 1710460800};
  seg.pruned_max = 2.5;
  seg.total = 40;
  seg.entries = {{Slice::canonicalize({{1, 200}}), {10, 12.5, false}}, {Slice(), {40, 40, true}}};
  const std::string b = encode_segment(seg);

  auto u32 = [&](size_t at) { uint32_t v; std::memcpy(&v, b.data() + at, 4); return v; };
  auto u64 = [&](size_t at) { uint64_t v; std::memcpy(&v, b.data() + at, 8); return v; };
  auto f64 = [&](size_t at) { double v; std::memcpy(&v, b.data() + at, 8); return v; };
  EXPECT_EQ(b.substr(0, 4), "TRCE");
  EXPECT_EQ(u32(4), kSegmentVersion);
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(static_cast<int64_t>(u64(12)), 1710460800);
  EXPECT_EQ(u64(20), 2u);
  EXPECT_EQ(f64(28), 2.5);
  EXPECT_EQ(f64(36), 40.0);
  // Entry 1: one pair, attr 1, value 200 (varint 0xC8 0x01), lo, hi, flags.
  size_t at = 44;
  EXPECT_EQ(static_cast<uint8_t>(b[at]), 1);
  EXPECT_EQ(static_cast<uint8_t>(b[at + 1]), 1);
  EXPECT_EQ(static_cast<uint8_t>(b[at + 2]), 0xC8);
  EXPECT_EQ(static_cast<uint8_t>(b[at + 3]), 0x01);
  EXPECT_EQ(f64(at + 4), 10.0);
  EXPECT_EQ(f64(at + 12), 12.5);
  EXPECT_EQ(static_cast<uint8_t>(b[at + 20]), 0);
  at += 21;
  // Entry 2: the top level, zero pairs, exact.
  EXPECT_EQ(static_cast<uint8_t>(b[at]), 0);
  EXPECT_EQ(f64(at + 1), 40.0);
  EXPECT_EQ(static_cast<uint8_t>(b[at + 17]), 1);
  at += 18;
  ASSERT_EQ(b.size(), at + 4);
  EXPECT_EQ(u32(at), crc32c(std::string_view(b).substr(0, at)));

  EXPECT_EQ(decode_segment(b, Granularity::kDay, "s"), seg);
}

TEST(SegmentCodec, Errors) {
  CubeSegment seg;
  seg.entries = {{Slice::canonicalize({{0, 1}}), {1, 2, false}}};
  const std::string good = encode_segment(seg);

  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_segment(magic, Granularity::kDay, "s"), FormatError);

  std::string version = good;
  version[4] = 9;
  EXPECT_THROW(decode_segment(version, Granularity::kDay, "s"), FormatError);

  std::string flipped = good;
  flipped[50] ^= 0x40;
  EXPECT_THROW(decode_segment(flipped, Granularity::kDay, "s"), ChecksumError);

  EXPECT_THROW(decode_segment(good.substr(0, 50), Granularity::kDay, "s"), ChecksumError);
  EXPECT_THROW(decode_segment(good.substr(0, 6), Granularity::kDay, "s"), ChecksumError);
}

TEST(Store, RoundTripIdentity) {
  const Cube cube = mixed_cube();
  TempDir dir;
  write_cube(cube, dir.path());
  const Cube back = read_cube(dir.path());
  EXPECT_EQ(back, cube);
  EXPECT_EQ(back.segments.size(), cube.segments.size());
  bool has_summaries = false;
  for (const auto& [key, seg] : back.segments) has_summaries = has_summaries || seg.has_summaries();
  EXPECT_TRUE(has_summaries);
}

TEST(Store, ManifestDocumentsSegments) {
  const Cube cube = mixed_cube();
  TempDir dir;
  write_cube(cube, dir.path());
  const auto m = manifest(dir.path());
  EXPECT_EQ(m["cube_id"], cube.id);
  EXPECT_EQ(m["attributes"].size(), 4u);
  EXPECT_EQ(m["segments"].size(), cube.segments.size());
  for (const auto& s : m["segments"]) {
    for (const char* key : {"metric", "granularity", "bucket_start", "file", "offset", "length", "entries",
                            "pruned_max", "total", "exact"}) {
      EXPECT_TRUE(s.contains(key)) << key;
    }
  }
}

TEST(Store, WritingTwiceIsByteIdentical) {
  const Cube cube = mixed_cube();
  TempDir a, b;
  write_cube(cube, a.path());
  write_cube(cube, b.path());
  const auto ma = manifest(a.path()), mb = manifest(b.path());
  ASSERT_EQ(ma["segments"].size(), mb["segments"].size());
  for (size_t i = 0; i < ma["segments"].size(); ++i) {
    const auto& sa = ma["segments"][i];
    const auto& sb = mb["segments"][i];
    const std::string da = slurp(a.path() / sa["file"].get<std::string>())
                               .substr(sa["offset"].get<size_t>(), sa["length"].get<size_t>());
    const std::string db = slurp(b.path() / sb["file"].get<std::string>())
                               .substr(sb["offset"].get<size_t>(), sb["length"].get<size_t>());
    EXPECT_EQ(da, db);
  }
}

TEST(Store, RewriteReplacesOldFiles) {
  TempDir dir;
  write_cube(mixed_cube(1), dir.path());
  const Cube second = mixed_cube(2);
  write_cube(second, dir.path());
  EXPECT_EQ(read_cube(dir.path()), second);
  std::set<std::string> listed = {"manifest.json"};
  const auto m = manifest(dir.path());
  for (const auto& s : m["segments"]) {
    listed.insert(s["file"].get<std::string>());
    if (s.contains("summary_file")) listed.insert(s["summary_file"].get<std::string>());
  }
  for (const auto& entry : fs::directory_iterator(dir.path())) {
    EXPECT_TRUE(listed.count(entry.path().filename().string())) << entry.path();
  }
}

TEST(Store, WrongMagicIsFormatError) {
  TempDir dir;
  write_cube(mixed_cube(), dir.path());
  const auto s = manifest(dir.path())["segments"][0];
  const fs::path file = dir.path() / s["file"].get<std::string>();
  std::string data = slurp(file);
  data[s["offset"].get<size_t>()] = 'Z';
  spit(file, data);
  EXPECT_THROW(read_cube(dir.path()), FormatError);
}

TEST(Store, TruncationIsChecksumErrorNamingSegment) {
  TempDir dir;
  write_cube(mixed_cube(), dir.path());
  const auto segments = manifest(dir.path())["segments"];
  // Truncate the data file holding the last listed segment in the middle of it.
  const auto& last = segments.back();
  const fs::path file = dir.path() / last["file"].get<std::string>();
  const size_t cut = last["offset"].get<size_t>() + last["length"].get<size_t>() / 2;
  spit(file, slurp(file).substr(0, cut));
  try {
    read_cube(dir.path());
    FAIL() << "expected ChecksumError";
  } catch (const ChecksumError& e) {
    EXPECT_NE(std::string(e.what()).find("segment(metric " + std::to_string(last["metric"].get<int>())),
              std::string::npos)
        << e.what();
  }
}

TEST(Store, MissingManifestIsFormatError) {
  TempDir dir;
  fs::create_directories(dir.path());
  EXPECT_THROW(read_cube(dir.path()), FormatError);
}

// Rollup -----------------------------------------------------------------

struct DailyFixture {
  Cube cube;
  ExactCube oracle;
};

DailyFixture daily(size_t n, bool refine, int64_t start, int days) {
  CubeConfig cfg = testing::synthetic_config(4, 2, n);
  cfg.refine = refine;
  SyntheticSource src({.seed = 31, .rows = static_cast<size_t>(days) * 300, .attributes = 4, .cardinality = 10,
                       .zipf_s = 1.1, .start = start, .span_seconds = days * 86400},
                      Schema::from_config(cfg));
  Cube cube = build(src, cfg).cube;
  src.rewind();
  const size_t slot = Schema::from_config(cfg).numeric_index("amount");
  ExactCube oracle(src, [slot](const Record& r) { return r.measures[slot]; }, 2,
                   {Granularity::kDay, Granularity::kWeek, Granularity::kMonth});
  return {std::move(cube), std::move(oracle)};
}

std::vector<CubeSegment> day_segments(const Cube& cube, MetricId metric) {
  std::vector<CubeSegment> out;
  for (const TimeBucket& b : cube.buckets(metric, Granularity::kDay)) out.push_back(*cube.find_segment(metric, b));
  return out;
}

const int64_t kMonday = 1709510400;  // 2024-03-04

TEST(Rollup, SevenExactDaysGiveExactWeek) {
  const auto f = daily(1000000, true, kMonday, 7);
  const auto days = day_segments(f.cube, 0);
  ASSERT_EQ(days.size(), 7u);
  const auto weeks = rollup(days, Granularity::kWeek, f.cube.metrics, f.cube.formatter(), 1000000);
  ASSERT_EQ(weeks.size(), 1u);
  const auto& want = f.oracle.bucket(Granularity::kWeek, kMonday);
  EXPECT_EQ(weeks[0].entries.size(), want.size());
  EXPECT_EQ(weeks[0].pruned_max, 0);
  for (const SegmentEntry& e : weeks[0].entries) {
    EXPECT_EQ(e.value.lo, want.at(testing::key_of(e.slice)));
    EXPECT_EQ(e.value.hi, e.value.lo);
  }
}

TEST(Rollup, PrunedDaysGiveSoundWeek) {
  const auto f = daily(20, false, kMonday, 7);
  const auto days = day_segments(f.cube, 0);
  double pruned_sum = 0, total_sum = 0;
  for (const auto& d : days) {
    EXPECT_GT(d.pruned_max, 0);
    pruned_sum += d.pruned_max;
    total_sum += d.total;
  }

  // Without a capacity squeeze the fold's pruned_max is the daily sum.
  const auto wide = rollup(days, Granularity::kWeek, f.cube.metrics, f.cube.formatter(), 1000000);
  ASSERT_EQ(wide.size(), 1u);
  EXPECT_EQ(wide[0].pruned_max, pruned_sum);

  // At capacity n the fold also prunes, which may raise pruned_max further.
  const auto weeks = rollup(days, Granularity::kWeek, f.cube.metrics, f.cube.formatter(), 20);
  ASSERT_EQ(weeks.size(), 1u);
  EXPECT_GE(weeks[0].pruned_max, pruned_sum);
  EXPECT_EQ(weeks[0].total, total_sum);
  EXPECT_EQ(weeks[0].total, f.oracle.value(Granularity::kWeek, kMonday, Slice()));
  EXPECT_LE(weeks[0].entries.size(), 20u);
  for (const auto* seg : {&wide[0], &weeks[0]}) {
    for (const SegmentEntry& e : seg->entries) {
      const double truth = f.oracle.value(Granularity::kWeek, kMonday, e.slice);
      EXPECT_LE(e.value.lo, truth);
      EXPECT_GE(e.value.hi, truth);
    }
    for (const auto& [key, truth] : f.oracle.bucket(Granularity::kWeek, kMonday)) {
      if (truth > seg->pruned_max) EXPECT_NE(seg->find(testing::slice_of(key)), nullptr);
    }
  }
  // The stored weekly segment of the cube is the same fold.
  EXPECT_EQ(*f.cube.find_segment(0, {Granularity::kWeek, kMonday}), weeks[0]);
}

TEST(Rollup, LeapFebruaryFoldsTwentyNineDays) {
  const int64_t feb1 = 1706745600;  // 2024-02-01
  const auto f = daily(1000, true, feb1, 29);
  const auto days = day_segments(f.cube, 0);
  ASSERT_EQ(days.size(), 29u);
  const auto months = rollup(days, Granularity::kMonth, f.cube.metrics, f.cube.formatter(), 1000);
  ASSERT_EQ(months.size(), 1u);
  EXPECT_EQ(months[0].bucket.start, feb1);
  EXPECT_EQ(months[0].total, f.oracle.value(Granularity::kMonth, feb1, Slice()));
}

TEST(Rollup, WeekToMonthRefused) {
  const auto f = daily(100, true, kMonday, 14);
  std::vector<CubeSegment> weeks;
  for (const TimeBucket& b : f.cube.buckets(0, Granularity::kWeek)) weeks.push_back(*f.cube.find_segment(0, b));
  EXPECT_THROW(rollup(weeks, Granularity::kMonth, f.cube.metrics, f.cube.formatter(), 100), GranularityError);
}

TEST(Rollup, DistinctSummariesMerge) {
  CubeConfig cfg = testing::synthetic_config(2, 1, 100);
  cfg.metrics = {MetricSpec{.name = "users", .kind = MetricKind::kDistinctCount, .field = "user"}};
  SyntheticSource src({.seed = 4, .rows = 1400, .attributes = 2, .cardinality = 3, .start = kMonday,
                       .span_seconds = 7 * 86400, .user_universe = 300},
                      Schema::from_config(cfg));
  const Cube cube = build(src, cfg).cube;
  const CubeSegment* week = cube.find_segment(0, {Granularity::kWeek, kMonday});
  ASSERT_NE(week, nullptr);
  ASSERT_TRUE(week->has_summaries());
  // 300 possible users, far below k: the weekly union is exact.
  src.rewind();
  std::unordered_set<testing::Key> all = {testing::key_of(Slice())};
  for (const SegmentEntry& e : week->entries) all.insert(testing::key_of(e.slice));
  const auto exact = testing::exact_distinct(src, 1, Granularity::kWeek, kMonday, all, 0);
  for (const SegmentEntry& e : week->entries) {
    EXPECT_EQ(e.value.lo, static_cast<double>(exact.at(testing::key_of(e.slice))));
  }
  EXPECT_EQ(week->total, static_cast<double>(exact.at(testing::key_of(Slice()))));
}

TEST(Store, SegmentSizeBoundedByEntries) {
  const Cube cube = mixed_cube();
  for (const auto& [key, seg] : cube.segments) {
    // Header 44 + CRC 4; each entry at most 1 + 2*depth*5 varint bytes + 17.
    EXPECT_LE(encode_segment(seg).size(), 48 + seg.entries.size() * (1 + 2 * 2 * 5 + 17));
  }
}

}  // namespace
}  // namespace trace
