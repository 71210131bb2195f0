#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trace/config.h"
#include "trace/record.h"

namespace trace::testing {

// Shape of a generated table. Attributes are named a0, a1, ... with values
// v0, v1, ...; value k has probability proportional to 1/(k+1)^zipf_s
// (uniform when zipf_s is 0).
struct TableSpec {
  uint64_t seed = 1;
  size_t rows = 1000;
  size_t attributes = 4;
  size_t cardinality = 10;
  double zipf_s = 0.0;
  int64_t start = 1709251200;  // 2024-03-01T00:00:00Z
  int64_t span_seconds = 7 * 86400;
  // Distinct-count column "user" drawn uniformly from this many ids.
  uint64_t user_universe = 1000;
};

// Rescannable source that regenerates row i from (seed, i), so million-row
// tables cost no memory. Numeric columns: "amount" (integer 1..100) and
// "price" (real in [0, 10)). Distinct column: "user".
class SyntheticSource : public RecordSource {
 public:
  SyntheticSource(TableSpec spec, const Schema& schema);

  Status next(Record& out, std::string* error) override;
  void rewind() override { pos_ = 0; }
  bool rescannable() const override { return true; }
  const Dictionaries& dictionaries() const override { return dicts_; }

  const TableSpec& spec() const { return spec_; }
  Record row(size_t i) const;

 private:
  enum class Column { kAmount, kPrice };

  TableSpec spec_;
  Dictionaries dicts_;
  std::vector<double> cdf_;
  std::vector<Column> numeric_;
  size_t distinct_slots_ = 0;
  size_t pos_ = 0;
};

std::vector<std::string> attribute_names(size_t count);

// Config over a0..a{attributes-1} with SUM(amount) "amount", COUNT "rows".
CubeConfig synthetic_config(size_t attributes, unsigned depth, size_t n);

}  // namespace trace::testing
