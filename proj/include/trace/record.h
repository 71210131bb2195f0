#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trace/config.h"
#include "trace/model.h"

namespace trace {

// Column bindings derived from a cube config. Attribute ids follow the order
// of `attributes`; measure and distinct slots follow the metric catalog.
struct Schema {
  std::vector<std::string> attributes;
  std::string time_column;
  std::vector<std::string> numeric_fields;
  std::vector<std::string> distinct_fields;

  static Schema from_config(const CubeConfig& cfg);
  size_t numeric_index(const std::string& field) const;
  size_t distinct_index(const std::string& field) const;
};

struct Record {
  int64_t timestamp = 0;
  std::vector<ValueId> attrs;                       // kNullValue for missing
  std::vector<double> measures;                     // NaN for missing
  std::vector<std::optional<uint64_t>> distinct_keys;  // hashed item, nullopt for missing
};

inline bool is_null_measure(double v) { return std::isnan(v); }

// A stream of dictionary-encoded records that can usually be re-read from the
// start. Sources intern attribute values into their own dictionaries; ids are
// stable across rewinds.
class RecordSource {
 public:
  enum class Status { kRecord, kBadRow, kEnd };

  virtual ~RecordSource() = default;

  // On kBadRow, `error` (when given) receives a description.
  virtual Status next(Record& out, std::string* error) = 0;
  // Throws NotRescannable when the source is one-shot.
  virtual void rewind() = 0;
  virtual bool rescannable() const = 0;
  virtual const Dictionaries& dictionaries() const = 0;
};

// In-memory table, used by tests and generators.
class MemorySource : public RecordSource {
 public:
  explicit MemorySource(Schema schema);

  // Empty attribute text means NULL. Measures follow schema.numeric_fields;
  // distinct items follow schema.distinct_fields (empty means NULL).
  void add_row(int64_t ts, const std::vector<std::string>& attr_values, const std::vector<double>& measures = {},
               const std::vector<std::string>& distinct_items = {});
  void add_record(Record r) { rows_.push_back({std::move(r), {}}); }
  void add_bad_row(std::string reason) { rows_.push_back({Record{}, std::move(reason)}); }
  // One-shot sources refuse rewind().
  void set_one_shot(bool one_shot) { one_shot_ = one_shot; }

  Status next(Record& out, std::string* error) override;
  void rewind() override;
  bool rescannable() const override { return !one_shot_; }
  const Dictionaries& dictionaries() const override { return dicts_; }
  Dictionaries& mutable_dictionaries() { return dicts_; }

  const Schema& schema() const { return schema_; }
  size_t size() const { return rows_.size(); }
  const Record& record(size_t i) const { return rows_[i].record; }

 private:
  struct Row {
    Record record;
    std::optional<std::string> error;
  };

  Schema schema_;
  Dictionaries dicts_;
  std::vector<Row> rows_;
  size_t pos_ = 0;
  bool one_shot_ = false;
  bool consumed_ = false;
};

}  // namespace trace
