#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace trace {

enum class Granularity : uint8_t { kMinute = 0, kHour = 1, kDay = 2, kWeek = 3, kMonth = 4, kAll = 5 };

std::string_view to_string(Granularity g);
// Accepts MINUTE|HOUR|DAY|WEEK|MONTH|ALL in any case.
Granularity parse_granularity(std::string_view text);

// A granularity-aligned UTC interval. ALL has start 0 and covers everything.
struct TimeBucket {
  Granularity granularity = Granularity::kDay;
  int64_t start = 0;

  friend bool operator==(const TimeBucket&, const TimeBucket&) = default;
  friend auto operator<=>(const TimeBucket&, const TimeBucket&) = default;
};

// Floors an epoch-seconds timestamp to the granularity boundary. Weeks start
// on Monday; months are calendar months.
TimeBucket bucketize(int64_t ts, Granularity g);

// Start of the bucket immediately after `b`.
TimeBucket next_bucket(const TimeBucket& b);
// Start of the bucket immediately before `b`.
TimeBucket previous_bucket(const TimeBucket& b);

// True when every `finer` bucket lies inside exactly one `coarser` bucket.
bool nests_in(Granularity finer, Granularity coarser);

// `2024-03-15` for DAY and coarser, `2024-03-15T17:00:00Z` below a day,
// `all` for the all-time bucket.
std::string format_bucket(const TimeBucket& b);

// Parses a timestamp (`YYYY-MM-DD`, `YYYY-MM`, `YYYY-MM-DDTHH:MM[:SS][Z]`,
// or integer epoch seconds) and floors it to `g`. `all` maps to the ALL bucket.
TimeBucket parse_bucket(std::string_view text, Granularity g);

// Parses an ISO-8601-like UTC timestamp into epoch seconds.
int64_t parse_iso_timestamp(std::string_view text);

}  // namespace trace
