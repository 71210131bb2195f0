#include "trace/time_bucket.h"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "trace/errors.h"

namespace trace {

namespace chr = std::chrono;

namespace {

constexpr int64_t kMinute = 60;
constexpr int64_t kHour = 3600;
constexpr int64_t kDay = 86400;
constexpr int64_t kWeek = 7 * kDay;
// 1970-01-01 was a Thursday; the Monday before it is 3 days earlier.
constexpr int64_t kMondayEpoch = -3 * kDay;

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t floor_to(int64_t ts, int64_t width, int64_t origin = 0) {
  return floor_div(ts - origin, width) * width + origin;
}

chr::year_month_day civil(int64_t ts) {
  return chr::year_month_day{chr::sys_days{chr::days{floor_div(ts, kDay)}}};
}

int64_t epoch_of(chr::year_month_day ymd) {
  return int64_t(chr::sys_days{ymd}.time_since_epoch().count()) * kDay;
}

bool parse_int(std::string_view s, int64_t& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::kMinute: return "MINUTE";
    case Granularity::kHour: return "HOUR";
    case Granularity::kDay: return "DAY";
    case Granularity::kWeek: return "WEEK";
    case Granularity::kMonth: return "MONTH";
    case Granularity::kAll: return "ALL";
  }
  return "?";
}

Granularity parse_granularity(std::string_view text) {
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "MINUTE") return Granularity::kMinute;
  if (upper == "HOUR") return Granularity::kHour;
  if (upper == "DAY") return Granularity::kDay;
  if (upper == "WEEK") return Granularity::kWeek;
  if (upper == "MONTH") return Granularity::kMonth;
  if (upper == "ALL") return Granularity::kAll;
  throw InvalidArgument("unknown granularity '" + std::string(text) + "'");
}

TimeBucket bucketize(int64_t ts, Granularity g) {
  switch (g) {
    case Granularity::kMinute: return {g, floor_to(ts, kMinute)};
    case Granularity::kHour: return {g, floor_to(ts, kHour)};
    case Granularity::kDay: return {g, floor_to(ts, kDay)};
    case Granularity::kWeek: return {g, floor_to(ts, kWeek, kMondayEpoch)};
    case Granularity::kMonth: {
      auto ymd = civil(ts);
      return {g, epoch_of(ymd.year() / ymd.month() / chr::day{1})};
    }
    case Granularity::kAll: return {g, 0};
  }
  return {g, ts};
}

TimeBucket next_bucket(const TimeBucket& b) {
  switch (b.granularity) {
    case Granularity::kMinute: return {b.granularity, b.start + kMinute};
    case Granularity::kHour: return {b.granularity, b.start + kHour};
    case Granularity::kDay: return {b.granularity, b.start + kDay};
    case Granularity::kWeek: return {b.granularity, b.start + kWeek};
    case Granularity::kMonth: {
      auto ymd = civil(b.start);
      return {b.granularity, epoch_of(chr::year_month_day{ymd.year() / ymd.month() / 1} + chr::months{1})};
    }
    case Granularity::kAll: return b;
  }
  return b;
}

TimeBucket previous_bucket(const TimeBucket& b) {
  switch (b.granularity) {
    case Granularity::kMonth: {
      auto ymd = civil(b.start);
      return {b.granularity, epoch_of(chr::year_month_day{ymd.year() / ymd.month() / 1} - chr::months{1})};
    }
    case Granularity::kAll: return b;
    default: {
      const int64_t width = next_bucket(b).start - b.start;
      return {b.granularity, b.start - width};
    }
  }
}

bool nests_in(Granularity finer, Granularity coarser) {
  if (coarser == Granularity::kAll) return finer != Granularity::kAll;
  if (finer >= coarser) return false;
  return !(finer == Granularity::kWeek && coarser == Granularity::kMonth);
}

std::string format_bucket(const TimeBucket& b) {
  if (b.granularity == Granularity::kAll) return "all";
  auto ymd = civil(b.start);
  char buf[32];
  if (b.granularity >= Granularity::kDay) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
  } else {
    const int64_t secs = b.start - floor_to(b.start, kDay);
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(secs / 3600), int(secs / 60 % 60), int(secs % 60));
  }
  return buf;
}

int64_t parse_iso_timestamp(std::string_view text) {
  int64_t epoch = 0;
  if (parse_int(text, epoch)) return epoch;
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);

  auto fail = [&]() -> int64_t {
    throw InvalidArgument("cannot parse timestamp '" + std::string(text) + "'");
  };
  auto field = [&](size_t pos, size_t len) -> int64_t {
    int64_t v = 0;
    if (pos + len > text.size() || !parse_int(text.substr(pos, len), v)) fail();
    return v;
  };

  if (text.size() < 7 || text[4] != '-') fail();
  const int64_t year = field(0, 4);
  const int64_t month = field(5, 2);
  int64_t day = 1;
  int64_t hh = 0, mm = 0, ss = 0;
  if (text.size() > 7) {
    if (text[7] != '-') fail();
    day = field(8, 2);
    if (text.size() > 10) {
      if (text[10] != 'T' && text[10] != ' ') fail();
      hh = field(11, 2);
      if (text.size() < 16 || text[13] != ':') fail();
      mm = field(14, 2);
      if (text.size() > 16) {
        if (text[16] != ':') fail();
        ss = field(17, 2);
        if (text.size() != 19) fail();
      }
    }
  }
  chr::year_month_day ymd{chr::year{int(year)}, chr::month{unsigned(month)}, chr::day{unsigned(day)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) fail();
  return epoch_of(ymd) + hh * kHour + mm * kMinute + ss;
}

TimeBucket parse_bucket(std::string_view text, Granularity g) {
  if (text == "all" || text == "ALL") return {Granularity::kAll, 0};
  if (g == Granularity::kAll) {
    throw InvalidArgument("bucket text '" + std::string(text) + "' is not valid for ALL");
  }
  return bucketize(parse_iso_timestamp(text), g);
}

}  // namespace trace
