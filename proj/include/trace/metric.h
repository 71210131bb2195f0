#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trace {

enum class MetricKind : uint8_t {
  // Base metrics: sketched directly.
  kCount,
  kSum,
  kDistinctCount,
  kPercentile,
  // Composites: evaluated at query time from base metrics.
  kAverage,
  kRatio,
  kDifference,
  kSignedSum,
};

std::string_view to_string(MetricKind k);
MetricKind parse_metric_kind(std::string_view text);
bool is_base(MetricKind k);

// Declarative metric as written in a cube config.
struct MetricSpec {
  std::string name;
  MetricKind kind = MetricKind::kCount;
  std::string field;                  // SUM, DISTINCT_COUNT, PERCENTILE, SIGNED_SUM
  double p = 0.5;                     // PERCENTILE
  std::vector<std::string> operands;  // AVERAGE {sum, count}; RATIO {num, den}; DIFFERENCE {a, b}
  bool sign_split = false;            // SUM only; forced for SIGNED_SUM

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

using MetricId = uint32_t;

// Which part of a signed measure a base metric aggregates.
enum class SignPart : uint8_t { kWhole = 0, kPositive = 1, kNegative = 2 };

// A resolved metric with an id. Sign-split metrics expand into two hidden
// base metrics `<name>.pos` and `<name>.neg` plus a SIGNED_SUM composite that
// keeps the user-facing name.
struct MetricDef {
  MetricId id = 0;
  std::string name;
  MetricKind kind = MetricKind::kCount;
  std::string field;
  double p = 0.5;
  SignPart sign = SignPart::kWhole;
  std::vector<MetricId> operands;
  bool hidden = false;

  bool base() const { return is_base(kind); }

  friend bool operator==(const MetricDef&, const MetricDef&) = default;
};

class MetricCatalog {
 public:
  MetricCatalog() = default;
  // Validates references and expands sign splitting. Throws ConfigError.
  explicit MetricCatalog(const std::vector<MetricSpec>& specs);
  static MetricCatalog from_defs(std::vector<MetricDef> defs);

  const std::vector<MetricDef>& all() const { return defs_; }
  const MetricDef& at(MetricId id) const { return defs_.at(id); }
  const MetricDef* find(std::string_view name) const;
  // Throws UnknownMetric.
  const MetricDef& by_name(std::string_view name) const;

  std::vector<MetricId> base_ids() const;
  std::vector<MetricId> composite_ids() const;

  // Numeric input columns (SUM / PERCENTILE / SIGNED_SUM fields), deduplicated,
  // in first-use order.
  std::vector<std::string> numeric_fields() const;
  // Columns whose values feed distinct counting.
  std::vector<std::string> distinct_fields() const;

  friend bool operator==(const MetricCatalog& a, const MetricCatalog& b) { return a.defs_ == b.defs_; }

 private:
  MetricId add(MetricDef def);

  std::vector<MetricDef> defs_;
};

}  // namespace trace
