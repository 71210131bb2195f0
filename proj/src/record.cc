#include "trace/record.h"

#include <algorithm>
#include <limits>

#include "trace/errors.h"
#include "trace/hash.h"

namespace trace {

Schema Schema::from_config(const CubeConfig& cfg) {
  MetricCatalog catalog(cfg.metrics);
  return Schema{cfg.attributes, cfg.time_column, catalog.numeric_fields(), catalog.distinct_fields()};
}

size_t Schema::numeric_index(const std::string& field) const {
  auto it = std::find(numeric_fields.begin(), numeric_fields.end(), field);
  if (it == numeric_fields.end()) throw SchemaError("field '" + field + "' is not a numeric measure");
  return static_cast<size_t>(it - numeric_fields.begin());
}

size_t Schema::distinct_index(const std::string& field) const {
  auto it = std::find(distinct_fields.begin(), distinct_fields.end(), field);
  if (it == distinct_fields.end()) throw SchemaError("field '" + field + "' is not a distinct-count field");
  return static_cast<size_t>(it - distinct_fields.begin());
}

MemorySource::MemorySource(Schema schema) : schema_(std::move(schema)) {
  for (const auto& a : schema_.attributes) dicts_.add_attribute(a);
}

void MemorySource::add_row(int64_t ts, const std::vector<std::string>& attr_values,
                           const std::vector<double>& measures, const std::vector<std::string>& distinct_items) {
  if (attr_values.size() != schema_.attributes.size()) {
    throw InvalidArgument("row has " + std::to_string(attr_values.size()) + " attribute values, schema has " +
                          std::to_string(schema_.attributes.size()));
  }
  Record r;
  r.timestamp = ts;
  r.attrs.reserve(attr_values.size());
  for (size_t a = 0; a < attr_values.size(); ++a) {
    r.attrs.push_back(attr_values[a].empty() ? kNullValue : dicts_.values[a].intern(attr_values[a]));
  }
  r.measures = measures;
  r.measures.resize(schema_.numeric_fields.size(), std::numeric_limits<double>::quiet_NaN());
  r.distinct_keys.resize(schema_.distinct_fields.size());
  for (size_t i = 0; i < distinct_items.size() && i < r.distinct_keys.size(); ++i) {
    if (!distinct_items[i].empty()) r.distinct_keys[i] = hash_bytes(distinct_items[i]);
  }
  rows_.push_back({std::move(r), {}});
}

RecordSource::Status MemorySource::next(Record& out, std::string* error) {
  if (pos_ >= rows_.size()) {
    consumed_ = true;
    return Status::kEnd;
  }
  const Row& row = rows_[pos_++];
  if (row.error) {
    if (error) *error = *row.error;
    return Status::kBadRow;
  }
  out = row.record;
  return Status::kRecord;
}

void MemorySource::rewind() {
  if (one_shot_ && (pos_ > 0 || consumed_)) throw NotRescannable("source cannot be re-read");
  pos_ = 0;
}

}  // namespace trace
