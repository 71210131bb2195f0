#pragma once

#include <stdexcept>
#include <string>

namespace trace {

// Base of every error raised by the engine. `code()` is a stable
// machine-readable identifier surfaced through the CLI and HTTP API.
class TraceError : public std::runtime_error {
 public:
  TraceError(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

#define TRACE_DEFINE_ERROR(Name, code_text)                         \
  class Name : public TraceError {                                  \
   public:                                                          \
    explicit Name(const std::string& message)                       \
        : TraceError(code_text, message) {}                         \
  }

TRACE_DEFINE_ERROR(ConflictingAttribute, "conflicting_attribute");
TRACE_DEFINE_ERROR(CapacityMismatch, "capacity_mismatch");
TRACE_DEFINE_ERROR(EmptySummary, "empty_summary");
TRACE_DEFINE_ERROR(SchemaError, "schema_error");
TRACE_DEFINE_ERROR(ParseError, "parse_error");
TRACE_DEFINE_ERROR(ConfigError, "config_error");
TRACE_DEFINE_ERROR(NotRescannable, "not_rescannable");
TRACE_DEFINE_ERROR(FormatError, "format_error");
TRACE_DEFINE_ERROR(ChecksumError, "checksum_error");
TRACE_DEFINE_ERROR(GranularityError, "granularity_error");
TRACE_DEFINE_ERROR(UnknownMetric, "metric_not_found");
TRACE_DEFINE_ERROR(UnknownBucket, "bucket_not_found");
TRACE_DEFINE_ERROR(UnknownSlice, "slice_not_found");
TRACE_DEFINE_ERROR(DivisionUndefined, "division_undefined");
TRACE_DEFINE_ERROR(InvalidArgument, "invalid_argument");

#undef TRACE_DEFINE_ERROR

}  // namespace trace
