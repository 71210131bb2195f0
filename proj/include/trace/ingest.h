#pragma once

#include <istream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trace/record.h"

namespace trace {

enum class SourceFormat { kAuto, kCsv, kJsonl };
SourceFormat parse_source_format(std::string_view text);

struct SourceSpec {
  std::string path;  // "-" reads standard input
  SourceFormat format = SourceFormat::kAuto;
  char delimiter = ',';
  // "auto" (epoch seconds or ISO text), "epoch", "iso", or a strftime-style
  // pattern such as "%d/%m/%Y %H:%M". Timestamps are UTC.
  std::string time_format = "auto";
  // Numeric attribute columns mapped to range labels.
  std::map<std::string, std::vector<double>> buckets;

  // Throws ConfigError.
  void validate(const Schema& schema) const;
};

// Reads the optional "source" object of a cube config document.
SourceSpec source_from_json(const nlohmann::json& doc);

// Range label for `v` under strictly increasing `bounds`: "<20", "20-30",
// ">=40". Ranges are closed on the left.
std::string bucket_label(double v, const std::vector<double>& bounds);

// Throws ParseError.
int64_t parse_timestamp(std::string_view text, const std::string& format);

// Opens a file (or buffered stdin) as a rescannable record source. Throws
// SchemaError when a bound column is missing from the header or first object.
std::unique_ptr<RecordSource> open_source(const SourceSpec& spec, const Schema& schema);
// Same over an in-memory document; used for stdin and tests.
std::unique_ptr<RecordSource> open_text_source(std::string text, SourceFormat format, const SourceSpec& spec,
                                               const Schema& schema);

// Splits one RFC 4180 record; `line` may hold embedded newlines. Returns
// false on an unterminated quote or stray text after a closing quote.
bool split_csv_record(std::string_view line, char delimiter, std::vector<std::string>& fields);

}  // namespace trace
