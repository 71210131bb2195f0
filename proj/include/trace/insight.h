#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trace/query.h"

namespace trace {

enum class ModelKind { kTrailingMean, kSeasonalNaive };
ModelKind parse_model_kind(std::string_view text);
std::string_view to_string(ModelKind k);

struct BaselineModel {
  ModelKind kind = ModelKind::kTrailingMean;
  unsigned window = 28;
  unsigned season = 7;
  // Tracked buckets required in the window; capped at the window length.
  unsigned min_history = 8;
};

struct Expectation {
  double prediction = 0;
  double sigma = 0;
  size_t history = 0;  // tracked buckets used
};

// `history` is the window oldest first; nullopt marks an untracked bucket.
// Trailing mean: mean of tracked values, sigma from successive changes
// between tracked values. Seasonal naive: mean of the values a whole number
// of seasons back, sigma from season-over-season changes.
std::optional<Expectation> expect_from_history(std::span<const std::optional<double>> history,
                                               const BaselineModel& model);

// Prediction for `bucket` from the buckets before it. nullopt means
// insufficient history.
std::optional<Expectation> expected(const Cube& cube, std::string_view metric, const Slice& slice,
                                    const TimeBucket& bucket, const BaselineModel& model);

struct Significance {
  double z = 0;
  bool significant = false;
};
Significance significance(double delta, double sigma, double z_star = 3.0);

enum class Verdict { kAnomalous, kNormal, kInsufficientHistory };
enum class Role { kDriver, kContext };
std::string_view to_string(Verdict v);
std::string_view to_string(Role r);

struct InsightRow {
  Slice slice;
  std::optional<BoundedValue> actual;
  std::optional<double> expected;
  std::optional<double> sigma;
  std::optional<double> z;
  double impact = 0;
  std::optional<Verdict> verdict;
  std::optional<Role> role;
  bool low_confidence = false;  // counterfactual taken from an untracked slice
};

inline constexpr double kDefaultZ = 3.0;
inline constexpr double kDefaultDominance = 0.8;

// Every tracked slice of `bucket` except [] against its baseline, largest
// |impact| first; slices without enough history come last.
std::vector<InsightRow> anomalies(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                  const BaselineModel& model, double z_star = kDefaultZ);

// Marks each row DRIVER or CONTEXT from its `impact`, visiting shallow
// slices first and larger |impact| first within a depth. A row is CONTEXT
// when its impact is 0, when some slice below it in `tracked` (slice ->
// impact) moves the same way by at least theta of its impact, or when it is
// at most (1 - theta) of an ancestor row visited earlier. Rows come back in
// visiting order.
void assign_roles(std::vector<InsightRow>& rows, const SliceMap<double>& tracked, double theta);

// Roles for `candidates` on the change from bucket a to bucket b.
std::vector<InsightRow> relevance_pick(const Cube& cube, std::string_view metric, const TimeBucket& a,
                                       const TimeBucket& b, std::span<const Slice> candidates,
                                       double theta = kDefaultDominance);

struct Counterfactual {
  enum class Kind { kBaselineBucket, kModel } kind = Kind::kModel;
  TimeBucket baseline;
  BaselineModel model;
};

// Slices whose shortfall or excess against the counterfactual moves the top
// level most, after removing CONTEXT rows. For AVERAGE and RATIO the impact
// is the change in the top-level ratio if the slice's numerator and
// denominator had both met their counterfactuals.
std::vector<InsightRow> drivers(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                const Counterfactual& cf, size_t k, double theta = kDefaultDominance,
                                double z_star = kDefaultZ);

}  // namespace trace
