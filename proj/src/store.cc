#include "trace/store.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <boost/crc.hpp>
#include <json.hpp>

#include "trace/bytes.h"
#include "trace/errors.h"

namespace trace {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSegmentMagic[4] = {'T', 'R', 'C', 'E'};
constexpr char kSummaryMagic[4] = {'T', 'R', 'C', 'S'};
constexpr int kManifestVersion = 1;
constexpr uint8_t kFlagExact = 0x01;
constexpr uint8_t kDistinctTag = 0;
constexpr uint8_t kQuantileTag = 1;

void append_crc(std::string& out) { bytes::put<uint32_t>(out, crc32c(out)); }

// Validates magic, version and trailing CRC; returns the body after the magic.
std::string_view open_checked(std::string_view data, const char (&magic)[4], const std::string& name) {
  if (data.size() >= 4 && !std::equal(magic, magic + 4, data.data())) {
    throw FormatError(name + ": bad magic");
  }
  if (data.size() < 12) throw ChecksumError(name + ": truncated");
  std::string_view version_bytes = data.substr(4, 4);
  if (bytes::get<uint32_t>(version_bytes) != kSegmentVersion) throw FormatError(name + ": unsupported version");
  std::string_view body = data.substr(0, data.size() - 4);
  std::string_view trailer = data.substr(data.size() - 4);
  if (bytes::get<uint32_t>(trailer) != crc32c(body)) throw ChecksumError(name + ": checksum mismatch");
  return body.substr(8);
}

void put_summary(std::string& out, const Summary& s) {
  if (const auto* d = std::get_if<DistinctSummary>(&s)) {
    bytes::put<uint8_t>(out, kDistinctTag);
    d->serialize(out);
  } else {
    bytes::put<uint8_t>(out, kQuantileTag);
    std::get<QuantileSummary>(s).serialize(out);
  }
}

Summary get_summary(std::string_view& in) {
  const auto tag = bytes::get<uint8_t>(in);
  if (tag == kDistinctTag) return DistinctSummary::deserialize(in);
  if (tag == kQuantileTag) return QuantileSummary::deserialize(in);
  throw FormatError("unknown summary tag " + std::to_string(tag));
}

json def_to_json(const MetricDef& d) {
  return {{"id", d.id},     {"name", d.name},         {"kind", std::string(to_string(d.kind))},
          {"field", d.field}, {"p", d.p},             {"sign", static_cast<int>(d.sign)},
          {"operands", d.operands}, {"hidden", d.hidden}};
}

MetricDef def_from_json(const json& j) {
  MetricDef d;
  d.id = j.at("id").get<MetricId>();
  d.name = j.at("name").get<std::string>();
  d.kind = parse_metric_kind(j.at("kind").get<std::string>());
  d.field = j.at("field").get<std::string>();
  d.p = j.at("p").get<double>();
  d.sign = static_cast<SignPart>(j.at("sign").get<int>());
  d.operands = j.at("operands").get<std::vector<MetricId>>();
  d.hidden = j.at("hidden").get<bool>();
  return d;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw FormatError("cannot write " + p.string());
}

std::string random_token() {
  std::random_device rd;
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", rd());
  return buf;
}

std::string segment_name(const SegmentKey& k) {
  return "segment(metric " + std::to_string(k.metric) + ", " + std::string(to_string(k.bucket.granularity)) + " " +
         format_bucket(k.bucket) + ")";
}

// Rebuilds a sketch whose entries reproduce the segment's ranges.
TopNSketch to_sketch(const CubeSegment& seg, size_t capacity, const TopNSketch::TieKey& key) {
  TopNSketch sk(capacity, 2.0, key);
  for (const SegmentEntry& e : seg.entries) {
    sk.put(e.slice, TopNSketch::Entry{e.value.lo, e.value.hi - e.value.lo, e.value.exact});
  }
  sk.set_state(seg.pruned_max, seg.total);
  return sk;
}

double summary_value(const Summary& s, double p) {
  if (const auto* d = std::get_if<DistinctSummary>(&s)) return d->estimate();
  const auto& q = std::get<QuantileSummary>(s);
  return q.count() ? q.query(p) : 0.0;
}

Summary merge_summary(const Summary& a, const Summary& b) {
  if (const auto* d = std::get_if<DistinctSummary>(&a)) return DistinctSummary::merge(*d, std::get<DistinctSummary>(b));
  return QuantileSummary::merge(std::get<QuantileSummary>(a), std::get<QuantileSummary>(b));
}

CubeSegment fold_summaries(std::span<const CubeSegment* const> group, const TimeBucket& target, double p,
                           size_t capacity, const SliceFormatter& fmt) {
  CubeSegment out;
  out.metric = group.front()->metric;
  out.bucket = target;
  SliceMap<size_t> slot;
  std::vector<Slice> slices;
  std::vector<Summary> merged;
  for (const CubeSegment* seg : group) {
    out.pruned_max += seg->pruned_max;
    out.total_summary = out.total_summary ? merge_summary(*out.total_summary, *seg->total_summary)
                                          : *seg->total_summary;
    for (size_t i = 0; i < seg->entries.size(); ++i) {
      auto [it, inserted] = slot.try_emplace(seg->entries[i].slice, slices.size());
      if (inserted) {
        slices.push_back(seg->entries[i].slice);
        merged.push_back(seg->summaries[i]);
      } else {
        merged[it->second] = merge_summary(merged[it->second], seg->summaries[i]);
      }
    }
  }
  out.total = summary_value(*out.total_summary, p);
  std::vector<size_t> order(slices.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> values(slices.size());
  for (size_t i = 0; i < slices.size(); ++i) values[i] = summary_value(merged[i], p);
  if (order.size() > capacity) {
    std::vector<std::string> text(slices.size());
    for (size_t i = 0; i < slices.size(); ++i) text[i] = fmt.render(slices[i]);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (values[a] != values[b]) return values[a] > values[b];
      return text[a] < text[b];
    });
    order.resize(capacity);
  }
  for (size_t i : order) {
    out.entries.push_back({slices[i], BoundedValue::point(values[i], false)});
    out.summaries.push_back(std::move(merged[i]));
  }
  sort_segment(out, fmt);
  return out;
}

}  // namespace

uint32_t crc32c(std::string_view data) {
  boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

std::string encode_segment(const CubeSegment& seg) {
  std::string out(kSegmentMagic, 4);
  bytes::put<uint32_t>(out, kSegmentVersion);
  bytes::put<uint32_t>(out, seg.metric);
  bytes::put<int64_t>(out, seg.bucket.start);
  bytes::put<uint64_t>(out, seg.entries.size());
  bytes::put<double>(out, seg.pruned_max);
  bytes::put<double>(out, seg.total);
  for (const SegmentEntry& e : seg.entries) {
    bytes::put_varint(out, e.slice.depth());
    for (const SlicePair& p : e.slice) {
      bytes::put_varint(out, p.attr);
      bytes::put_varint(out, p.value);
    }
    bytes::put<double>(out, e.value.lo);
    bytes::put<double>(out, e.value.hi);
    bytes::put<uint8_t>(out, e.value.exact ? kFlagExact : 0);
  }
  append_crc(out);
  return out;
}

CubeSegment decode_segment(std::string_view data, Granularity g, const std::string& name) {
  std::string_view in = open_checked(data, kSegmentMagic, name);
  CubeSegment seg;
  try {
    seg.metric = bytes::get<uint32_t>(in);
    seg.bucket = TimeBucket{g, bytes::get<int64_t>(in)};
    const auto count = bytes::get<uint64_t>(in);
    seg.pruned_max = bytes::get<double>(in);
    seg.total = bytes::get<double>(in);
    if (count > in.size()) throw FormatError(name + ": entry count exceeds segment size");
    seg.entries.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
      SegmentEntry e;
      const uint64_t depth = bytes::get_varint(in);
      for (uint64_t k = 0; k < depth; ++k) {
        SlicePair p{static_cast<AttributeId>(bytes::get_varint(in)), static_cast<ValueId>(bytes::get_varint(in))};
        if (k > 0 && p.attr <= e.slice[k - 1].attr) throw FormatError(name + ": slice pairs out of order");
        e.slice.push_back_ordered(p);
      }
      e.value.lo = bytes::get<double>(in);
      e.value.hi = bytes::get<double>(in);
      e.value.exact = (bytes::get<uint8_t>(in) & kFlagExact) != 0;
      seg.entries.push_back(std::move(e));
    }
  } catch (const bytes::Truncated&) {
    throw ChecksumError(name + ": truncated");
  }
  if (!in.empty()) throw FormatError(name + ": trailing bytes");
  seg.build_index();
  return seg;
}

std::string encode_summaries(const CubeSegment& seg) {
  std::string out(kSummaryMagic, 4);
  bytes::put<uint32_t>(out, kSegmentVersion);
  bytes::put<uint64_t>(out, seg.summaries.size());
  for (const Summary& s : seg.summaries) put_summary(out, s);
  put_summary(out, *seg.total_summary);
  append_crc(out);
  return out;
}

void decode_summaries(std::string_view data, CubeSegment& seg, const std::string& name) {
  std::string_view in = open_checked(data, kSummaryMagic, name);
  try {
    const auto count = bytes::get<uint64_t>(in);
    if (count != seg.entries.size()) throw FormatError(name + ": summary count does not match entries");
    seg.summaries.clear();
    seg.summaries.reserve(count);
    for (uint64_t i = 0; i < count; ++i) seg.summaries.push_back(get_summary(in));
    seg.total_summary = get_summary(in);
  } catch (const bytes::Truncated&) {
    throw ChecksumError(name + ": truncated summaries");
  } catch (const EmptySummary& e) {
    throw FormatError(name + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(name + ": " + e.what());
  }
  if (!in.empty()) throw FormatError(name + ": trailing summary bytes");
}

void write_cube(const Cube& cube, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path manifest_path = dir / "manifest.json";
  std::set<std::string> previous;
  if (fs::exists(manifest_path)) {
    try {
      const json old = json::parse(read_file(manifest_path));
      for (const auto& s : old.at("segments")) {
        previous.insert(s.at("file").get<std::string>());
        if (s.contains("summary_file")) previous.insert(s.at("summary_file").get<std::string>());
      }
    } catch (const json::exception&) {
      // An unreadable old manifest just means nothing to clean up.
    }
  }

  const std::string token = random_token();
  json segments = json::array();
  std::map<std::pair<MetricId, Granularity>, std::pair<std::string, std::string>> files;  // data, summaries
  for (const auto& [key, seg] : cube.segments) {
    auto& [data, sums] = files[{key.metric, key.bucket.granularity}];
    const std::string stem = "m" + std::to_string(key.metric) + "-" + std::string(to_string(key.bucket.granularity)) +
                             "-" + token;
    json entry = {{"metric", key.metric},
                  {"granularity", std::string(to_string(key.bucket.granularity))},
                  {"bucket_start", key.bucket.start},
                  {"file", stem + ".seg"},
                  {"entries", seg.entries.size()},
                  {"pruned_max", seg.pruned_max},
                  {"total", seg.total},
                  {"exact", seg.all_exact()}};
    const std::string bytes_out = encode_segment(seg);
    entry["offset"] = data.size();
    entry["length"] = bytes_out.size();
    data += bytes_out;
    if (seg.has_summaries()) {
      const std::string s = encode_summaries(seg);
      entry["summary_file"] = stem + ".sum";
      entry["summary_offset"] = sums.size();
      entry["summary_length"] = s.size();
      sums += s;
    }
    segments.push_back(std::move(entry));
  }
  for (const auto& [key, contents] : files) {
    const std::string stem = "m" + std::to_string(key.first) + "-" + std::string(to_string(key.second)) + "-" + token;
    write_file(dir / (stem + ".seg"), contents.first);
    if (!contents.second.empty()) write_file(dir / (stem + ".sum"), contents.second);
  }

  json values = json::array();
  for (const Dictionary& d : cube.dicts.values) values.push_back(d.texts());
  json metrics = json::array();
  for (const MetricDef& d : cube.metrics.all()) metrics.push_back(def_to_json(d));
  json fds = json::array();
  for (auto [a, b] : cube.fds.edges()) fds.push_back({a, b});
  json manifest = {{"format_version", kManifestVersion},
                   {"cube_id", cube.id},
                   {"created_at", cube.created_at},
                   {"config", to_json(cube.config)},
                   {"attributes", cube.dicts.attributes.texts()},
                   {"values", values},
                   {"metrics", metrics},
                   {"fds", fds},
                   {"segments", segments}};
  const fs::path tmp = dir / ("manifest.json." + token);
  write_file(tmp, manifest.dump(1));
  fs::rename(tmp, manifest_path);

  for (const std::string& old : previous) {
    std::error_code ec;
    fs::remove(dir / old, ec);
  }
}

Cube read_cube(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw FormatError("no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  Cube cube;
  try {
    if (m.at("format_version").get<int>() != kManifestVersion) throw FormatError("manifest.json: unsupported version");
    cube.id = m.at("cube_id").get<std::string>();
    cube.created_at = m.at("created_at").get<std::string>();
    cube.config = config_from_json(m.at("config"));
    cube.dicts.attributes = Dictionary::from_texts(m.at("attributes").get<std::vector<std::string>>());
    for (const auto& v : m.at("values")) cube.dicts.values.push_back(Dictionary::from_texts(v.get<std::vector<std::string>>()));
    std::vector<MetricDef> defs;
    for (const auto& d : m.at("metrics")) defs.push_back(def_from_json(d));
    cube.metrics = MetricCatalog::from_defs(std::move(defs));
    std::vector<std::pair<AttributeId, AttributeId>> edges;
    for (const auto& e : m.at("fds")) edges.emplace_back(e.at(0).get<AttributeId>(), e.at(1).get<AttributeId>());
    cube.fds = FDGraph(cube.dicts.attributes.size(), std::move(edges));

    std::map<std::string, std::string> cache;
    auto file = [&](const std::string& name) -> const std::string& {
      auto it = cache.find(name);
      if (it == cache.end()) it = cache.emplace(name, read_file(dir / name)).first;
      return it->second;
    };
    auto slice_of = [&](const std::string& contents, size_t offset, size_t length, const std::string& name) {
      if (offset > contents.size()) throw ChecksumError(name + ": truncated");
      return std::string_view(contents).substr(offset, length);
    };
    for (const auto& s : m.at("segments")) {
      const Granularity g = parse_granularity(s.at("granularity").get<std::string>());
      const SegmentKey key{s.at("metric").get<MetricId>(), TimeBucket{g, s.at("bucket_start").get<int64_t>()}};
      const std::string name = segment_name(key);
      CubeSegment seg = decode_segment(
          slice_of(file(s.at("file")), s.at("offset").get<size_t>(), s.at("length").get<size_t>(), name), g, name);
      if (seg.key() != key) throw FormatError(name + ": header does not match manifest");
      if (s.contains("summary_file")) {
        decode_summaries(slice_of(file(s.at("summary_file")), s.at("summary_offset").get<size_t>(),
                                  s.at("summary_length").get<size_t>(), name),
                         seg, name);
      }
      if (!cube.segments.emplace(key, std::move(seg)).second) throw FormatError(name + ": listed twice");
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  return cube;
}

std::vector<CubeSegment> rollup(std::span<const CubeSegment> segments, Granularity target, const MetricCatalog& metrics,
                                const SliceFormatter& fmt, size_t n) {
  std::vector<CubeSegment> out;
  if (segments.empty()) return out;
  const Granularity g = segments.front().bucket.granularity;
  if (!nests_in(g, target)) {
    throw GranularityError("cannot roll " + std::string(to_string(g)) + " segments up to " +
                           std::string(to_string(target)));
  }
  const MetricId metric = segments.front().metric;
  std::map<TimeBucket, std::vector<const CubeSegment*>> groups;
  for (const CubeSegment& seg : segments) {
    if (seg.metric != metric || seg.bucket.granularity != g) {
      throw InvalidArgument("rollup input mixes metrics or granularities");
    }
    groups[bucketize(seg.bucket.start, target)].push_back(&seg);
  }
  const MetricDef& def = metrics.at(metric);
  TopNSketch::TieKey key = [&fmt](const Slice& s) { return fmt.render(s); };
  for (const auto& [bucket, group] : groups) {
    size_t capacity = n;
    for (const CubeSegment* seg : group) capacity = std::max(capacity, seg->entries.size());
    if (group.front()->has_summaries()) {
      out.push_back(fold_summaries(group, bucket, def.p, capacity, fmt));
      continue;
    }
    TopNSketch acc = to_sketch(*group.front(), capacity, key);
    for (size_t i = 1; i < group.size(); ++i) acc = TopNSketch::merge(acc, to_sketch(*group[i], capacity, key));
    acc.prune();
    CubeSegment seg;
    seg.metric = metric;
    seg.bucket = bucket;
    seg.pruned_max = acc.pruned_max();
    seg.total = acc.total();
    for (const auto& [slice, e] : acc.entries()) seg.entries.push_back({slice, BoundedValue{e.observed, e.hi(), e.exact}});
    sort_segment(seg, fmt);
    out.push_back(std::move(seg));
  }
  return out;
}

void add_rollups(Cube& cube) {
  const Granularity base = cube.config.granularity;
  std::vector<Granularity> targets = cube.config.effective_rollups();
  std::sort(targets.begin(), targets.end());
  const SliceFormatter fmt = cube.formatter();
  for (MetricId id : cube.metrics.base_ids()) {
    std::vector<CubeSegment> base_segs;
    for (const TimeBucket& b : cube.buckets(id, base)) base_segs.push_back(*cube.find_segment(id, b));
    std::vector<CubeSegment> daily;
    for (Granularity target : targets) {
      std::span<const CubeSegment> source = base_segs;
      if (base < Granularity::kDay && target > Granularity::kDay) {
        if (daily.empty()) daily = rollup(base_segs, Granularity::kDay, cube.metrics, fmt, cube.config.n);
        source = daily;
      }
      for (CubeSegment& seg : rollup(source, target, cube.metrics, fmt, cube.config.n)) {
        if (target == Granularity::kDay) daily.push_back(seg);
        cube.segments.insert_or_assign(seg.key(), std::move(seg));
      }
    }
  }
}

}  // namespace trace
