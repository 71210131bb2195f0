#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace/cube.h"

namespace trace {

inline constexpr uint32_t kSegmentVersion = 1;

// Binary segment codec. The byte layout is fixed: "TRCE", version u32,
// metric u32, bucket start i64, entry count u64, pruned_max f64, total f64,
// entries (varint pair count, varint attr/value pairs, lo f64, hi f64,
// flags u8), then CRC32C of everything before it. All little-endian.
std::string encode_segment(const CubeSegment& seg);
// `name` labels the segment in error messages. Throws FormatError on a bad
// header and ChecksumError on truncation or a CRC mismatch.
CubeSegment decode_segment(std::string_view bytes, Granularity g, const std::string& name);

// Per-entry summaries plus the total summary, stored beside the segment.
std::string encode_summaries(const CubeSegment& seg);
void decode_summaries(std::string_view bytes, CubeSegment& seg, const std::string& name);

uint32_t crc32c(std::string_view bytes);

// Writes manifest.json plus one data file per (metric, granularity) into
// `dir`, replacing any previous manifest atomically.
void write_cube(const Cube& cube, const std::filesystem::path& dir);
Cube read_cube(const std::filesystem::path& dir);

// Folds `segments` (one metric, granularity g) into buckets of `target` by
// sketch merge; summary-bearing segments merge their summaries. Throws
// GranularityError when g does not nest in `target`.
std::vector<CubeSegment> rollup(std::span<const CubeSegment> segments, Granularity target,
                                const MetricCatalog& metrics, const SliceFormatter& fmt, size_t n);

// Adds every rollup granularity of cube.config, deriving WEEK and MONTH from
// DAY when the base granularity is finer than a day.
void add_rollups(Cube& cube);

}  // namespace trace
