#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trace/metric.h"
#include "trace/time_bucket.h"

namespace trace {

enum class PassMode : uint8_t { kAuto, kSingle, kMulti };

std::string_view to_string(PassMode m);
PassMode parse_pass_mode(std::string_view text);

struct CubeConfig {
  std::vector<std::string> attributes;
  std::string time_column = "timestamp";
  Granularity granularity = Granularity::kDay;
  // Coarser granularities produced by merging base segments. Empty means the
  // default: every one of DAY, WEEK, MONTH coarser than the base.
  std::vector<Granularity> rollups;
  std::vector<MetricSpec> metrics;

  size_t n = 100000;
  unsigned max_depth = 3;
  double overflow_factor = 2.0;
  PassMode multipass = PassMode::kAuto;
  bool detect_fds = true;
  size_t fd_sample_size = 100000;
  double fd_violation_tolerance = 0.0;
  bool refine = true;
  uint32_t distinct_k = 1024;
  uint32_t quantile_k = 200;
  // Builds abort once malformed rows exceed this fraction of rows read.
  double max_bad_row_fraction = 0.01;

  // Throws ConfigError.
  void validate() const;
  std::vector<Granularity> effective_rollups() const;
  // AUTO picks the level-wise build for wide schemas or deep slices.
  bool use_multipass() const;

  friend bool operator==(const CubeConfig&, const CubeConfig&) = default;
};

nlohmann::json to_json(const CubeConfig& cfg);
// Unknown keys are rejected so typos do not silently fall back to defaults.
CubeConfig config_from_json(const nlohmann::json& doc);

}  // namespace trace
