#include "trace/ingest.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <sstream>

#include "trace/errors.h"
#include "trace/hash.h"

namespace trace {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::string format_bound(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Shared record assembly: column lookups go through `field(i)` where i
// indexes the bound-column list.
class BoundSource : public RecordSource {
 public:
  BoundSource(const SourceSpec& spec, const Schema& schema) : spec_(spec), schema_(schema) {
    spec_.validate(schema_);
    for (const auto& a : schema_.attributes) {
      dicts_.add_attribute(a);
      columns_.push_back(a);
      auto it = spec_.buckets.find(a);
      bounds_.push_back(it == spec_.buckets.end() ? nullptr : &it->second);
    }
    columns_.push_back(schema_.time_column);
    for (const auto& f : schema_.numeric_fields) columns_.push_back(f);
    for (const auto& f : schema_.distinct_fields) columns_.push_back(f);
  }

  bool rescannable() const override { return true; }
  const Dictionaries& dictionaries() const override { return dicts_; }

 protected:
  enum class Kind { kText, kNumber, kNull };
  struct Cell {
    Kind kind = Kind::kNull;
    std::string text;  // text form, also set for numbers
    double number = 0;
  };

  // Fills `out` from cells ordered like columns_. Returns false with `error`
  // set for a malformed row.
  bool assemble(const std::vector<Cell>& cells, Record& out, std::string* error) {
    const size_t na = schema_.attributes.size();
    out.attrs.assign(na, kNullValue);
    for (size_t a = 0; a < na; ++a) {
      const Cell& c = cells[a];
      if (c.kind == Kind::kNull) continue;
      if (bounds_[a]) {
        auto v = c.kind == Kind::kNumber ? std::optional<double>(c.number) : parse_double(c.text);
        if (!v || std::isnan(*v)) return fail(error, "non-numeric value '" + c.text + "' in bucketed column '" +
                                                         schema_.attributes[a] + "'");
        out.attrs[a] = dicts_.values[a].intern(bucket_label(*v, *bounds_[a]));
      } else {
        out.attrs[a] = dicts_.values[a].intern(c.text);
      }
    }

    const Cell& t = cells[na];
    if (t.kind == Kind::kNull) return fail(error, "missing timestamp");
    try {
      if (t.kind == Kind::kNumber && (spec_.time_format == "auto" || spec_.time_format == "epoch")) {
        if (!std::isfinite(t.number)) return fail(error, "non-finite timestamp");
        out.timestamp = static_cast<int64_t>(std::floor(t.number));
      } else {
        out.timestamp = parse_timestamp(t.text, spec_.time_format);
      }
    } catch (const ParseError& e) {
      return fail(error, e.what());
    }

    const size_t nm = schema_.numeric_fields.size();
    out.measures.assign(nm, std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < nm; ++i) {
      const Cell& c = cells[na + 1 + i];
      if (c.kind == Kind::kNull) continue;
      auto v = c.kind == Kind::kNumber ? std::optional<double>(c.number) : parse_double(c.text);
      if (!v) return fail(error, "non-numeric value '" + c.text + "' in column '" + schema_.numeric_fields[i] + "'");
      out.measures[i] = *v;
    }

    const size_t nd = schema_.distinct_fields.size();
    out.distinct_keys.assign(nd, std::nullopt);
    for (size_t i = 0; i < nd; ++i) {
      const Cell& c = cells[na + 1 + nm + i];
      if (c.kind != Kind::kNull) out.distinct_keys[i] = hash_bytes(c.text);
    }
    return true;
  }

  static bool fail(std::string* error, std::string msg) {
    if (error) *error = std::move(msg);
    return false;
  }

  SourceSpec spec_;
  Schema schema_;
  Dictionaries dicts_;
  std::vector<std::string> columns_;
  std::vector<const std::vector<double>*> bounds_;
};

std::unique_ptr<std::istream> open_stream(const std::string& path) {
  auto in = std::make_unique<std::ifstream>(path, std::ios::binary);
  if (!*in) throw SchemaError("cannot open input '" + path + "'");
  return in;
}

class CsvSource : public BoundSource {
 public:
  CsvSource(std::unique_ptr<std::istream> in, const SourceSpec& spec, const Schema& schema)
      : BoundSource(spec, schema), in_(std::move(in)) {
    std::string header;
    if (!read_record(header)) throw SchemaError("input has no header row");
    std::vector<std::string> names;
    if (!split_csv_record(header, spec_.delimiter, names)) throw SchemaError("malformed header row");
    header_width_ = names.size();
    for (const std::string& col : columns_) {
      auto it = std::find_if(names.begin(), names.end(), [&](const std::string& n) { return trim(n) == col; });
      if (it == names.end()) throw SchemaError("column '" + col + "' is missing from the header");
      index_.push_back(static_cast<size_t>(it - names.begin()));
    }
    data_start_ = in_->tellg();
  }

  Status next(Record& out, std::string* error) override {
    std::string raw;
    while (read_record(raw)) {
      ++line_;
      if (raw.empty()) continue;
      if (!split_csv_record(raw, spec_.delimiter, fields_)) {
        fail(error, "row " + std::to_string(line_) + ": malformed quoting");
        return Status::kBadRow;
      }
      if (fields_.size() != header_width_) {
        fail(error, "row " + std::to_string(line_) + ": expected " + std::to_string(header_width_) + " fields, got " +
                        std::to_string(fields_.size()));
        return Status::kBadRow;
      }
      cells_.resize(index_.size());
      for (size_t i = 0; i < index_.size(); ++i) {
        std::string& f = fields_[index_[i]];
        cells_[i].kind = f.empty() ? Kind::kNull : Kind::kText;
        cells_[i].text = std::move(f);
      }
      std::string why;
      if (!assemble(cells_, out, &why)) {
        fail(error, "row " + std::to_string(line_) + ": " + why);
        return Status::kBadRow;
      }
      return Status::kRecord;
    }
    return Status::kEnd;
  }

  void rewind() override {
    in_->clear();
    in_->seekg(data_start_);
    line_ = 0;
  }

 private:
  // One logical record; continues across newlines inside quotes.
  bool read_record(std::string& out) {
    out.clear();
    std::string part;
    bool any = false;
    while (std::getline(*in_, part)) {
      if (!part.empty() && part.back() == '\r') part.pop_back();
      if (any) out.push_back('\n');
      out += part;
      any = true;
      if (std::count(out.begin(), out.end(), '"') % 2 == 0) return true;
    }
    return any;
  }

  std::unique_ptr<std::istream> in_;
  std::streampos data_start_;
  size_t header_width_ = 0;
  std::vector<size_t> index_;
  std::vector<std::string> fields_;
  std::vector<Cell> cells_;
  uint64_t line_ = 0;
};

class JsonlSource : public BoundSource {
 public:
  JsonlSource(std::unique_ptr<std::istream> in, const SourceSpec& spec, const Schema& schema)
      : BoundSource(spec, schema), in_(std::move(in)) {
    std::string line;
    while (std::getline(*in_, line) && trim(line).empty()) {
    }
    json first = json::parse(line, nullptr, false);
    if (first.is_discarded() || !first.is_object()) throw SchemaError("first line is not a JSON object");
    for (const std::string& col : columns_) {
      if (!first.contains(col)) throw SchemaError("key '" + col + "' is missing from the first object");
    }
    rewind();
  }

  Status next(Record& out, std::string* error) override {
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_;
      if (trim(line).empty()) continue;
      json obj = json::parse(line, nullptr, false);
      if (obj.is_discarded() || !obj.is_object()) {
        fail(error, "line " + std::to_string(line_) + ": not a JSON object");
        return Status::kBadRow;
      }
      cells_.resize(columns_.size());
      for (size_t i = 0; i < columns_.size(); ++i) {
        Cell& c = cells_[i];
        c = Cell{};
        auto it = obj.find(columns_[i]);
        if (it == obj.end() || it->is_null()) continue;
        if (it->is_string()) {
          c.kind = Kind::kText;
          c.text = it->get<std::string>();
          if (c.text.empty()) c.kind = Kind::kNull;
        } else if (it->is_number()) {
          c.kind = Kind::kNumber;
          c.number = it->get<double>();
          c.text = it->dump();
        } else if (it->is_boolean()) {
          c.kind = Kind::kText;
          c.text = it->get<bool>() ? "true" : "false";
        } else {
          fail(error, "line " + std::to_string(line_) + ": key '" + columns_[i] + "' is not a scalar");
          return Status::kBadRow;
        }
      }
      std::string why;
      if (!assemble(cells_, out, &why)) {
        fail(error, "line " + std::to_string(line_) + ": " + why);
        return Status::kBadRow;
      }
      return Status::kRecord;
    }
    return Status::kEnd;
  }

  void rewind() override {
    in_->clear();
    in_->seekg(0);
    line_ = 0;
  }

 private:
  std::unique_ptr<std::istream> in_;
  std::vector<Cell> cells_;
  uint64_t line_ = 0;
};

SourceFormat infer_format(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".jsonl") || ends_with(".ndjson") || ends_with(".json")) return SourceFormat::kJsonl;
  return SourceFormat::kCsv;
}

std::unique_ptr<RecordSource> make_source(std::unique_ptr<std::istream> in, SourceFormat format,
                                          const SourceSpec& spec, const Schema& schema) {
  if (format == SourceFormat::kJsonl) return std::make_unique<JsonlSource>(std::move(in), spec, schema);
  return std::make_unique<CsvSource>(std::move(in), spec, schema);
}

}  // namespace

SourceFormat parse_source_format(std::string_view text) {
  std::string low(text);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
  if (low == "auto") return SourceFormat::kAuto;
  if (low == "csv") return SourceFormat::kCsv;
  if (low == "jsonl") return SourceFormat::kJsonl;
  throw ConfigError("unknown source format '" + std::string(text) + "' (expected csv, jsonl or auto)");
}

void SourceSpec::validate(const Schema& schema) const {
  if (delimiter == '"' || delimiter == '\n' || delimiter == '\r') throw ConfigError("invalid delimiter");
  for (const auto& [column, bounds] : buckets) {
    if (std::find(schema.attributes.begin(), schema.attributes.end(), column) == schema.attributes.end()) {
      throw ConfigError("bucketed column '" + column + "' is not an attribute");
    }
    if (bounds.empty()) throw ConfigError("bucket boundaries for '" + column + "' are empty");
    for (size_t i = 0; i < bounds.size(); ++i) {
      if (!std::isfinite(bounds[i])) throw ConfigError("bucket boundaries for '" + column + "' must be finite");
      if (i > 0 && !(bounds[i] > bounds[i - 1])) {
        throw ConfigError("bucket boundaries for '" + column + "' must be strictly increasing");
      }
    }
  }
}

SourceSpec source_from_json(const json& doc) {
  SourceSpec spec;
  auto it = doc.find("source");
  if (it == doc.end()) return spec;
  const json& s = *it;
  if (!s.is_object()) throw ConfigError("source must be an object");
  for (const auto& [key, value] : s.items()) {
    if (key != "path" && key != "format" && key != "delimiter" && key != "time_format" && key != "buckets") {
      throw ConfigError("unknown key 'source." + key + "'");
    }
  }
  try {
    if (s.contains("path")) spec.path = s.at("path").get<std::string>();
    if (s.contains("format")) spec.format = parse_source_format(s.at("format").get<std::string>());
    if (s.contains("delimiter")) {
      const auto d = s.at("delimiter").get<std::string>();
      if (d == "\\t" || d == "tab") {
        spec.delimiter = '\t';
      } else if (d.size() == 1) {
        spec.delimiter = d[0];
      } else {
        throw ConfigError("delimiter must be a single character");
      }
    }
    if (s.contains("time_format")) spec.time_format = s.at("time_format").get<std::string>();
    if (s.contains("buckets")) spec.buckets = s.at("buckets").get<std::map<std::string, std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("source: ") + e.what());
  }
  return spec;
}

std::string bucket_label(double v, const std::vector<double>& bounds) {
  if (bounds.empty()) throw InvalidArgument("no bucket boundaries");
  if (v < bounds.front()) return "<" + format_bound(bounds.front());
  if (v >= bounds.back()) return ">=" + format_bound(bounds.back());
  auto hi = std::upper_bound(bounds.begin(), bounds.end(), v);
  return format_bound(*(hi - 1)) + "-" + format_bound(*hi);
}

int64_t parse_timestamp(std::string_view text, const std::string& format) {
  const std::string_view t = trim(text);
  auto bad = [&]() { return ParseError("cannot parse timestamp '" + std::string(text) + "'"); };
  if (format == "auto" || format == "epoch") {
    if (auto v = parse_double(t)) {
      if (!std::isfinite(*v)) throw bad();
      return static_cast<int64_t>(std::floor(*v));
    }
    if (format == "epoch") throw bad();
  }
  if (format == "auto" || format == "iso") {
    try {
      return parse_iso_timestamp(t);
    } catch (const InvalidArgument&) {
      throw bad();
    }
  }
  std::tm tm{};
  const std::string s(t);
  const char* end = strptime(s.c_str(), format.c_str(), &tm);
  if (!end || trim(end).size() != 0) throw bad();
  return static_cast<int64_t>(timegm(&tm));
}

bool split_csv_record(std::string_view line, char delimiter, std::vector<std::string>& fields) {
  fields.clear();
  std::string cur;
  size_t i = 0;
  const size_t n = line.size();
  while (true) {
    cur.clear();
    if (i < n && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (line[i] == '"') {
          if (i + 1 < n && line[i + 1] == '"') {
            cur.push_back('"');
            i += 2;
          } else {
            ++i;
            closed = true;
            break;
          }
        } else {
          cur.push_back(line[i++]);
        }
      }
      if (!closed) return false;
      if (i < n && line[i] != delimiter) return false;
    } else {
      while (i < n && line[i] != delimiter) cur.push_back(line[i++]);
    }
    fields.push_back(cur);
    if (i >= n) break;
    ++i;  // delimiter
  }
  return true;
}

std::unique_ptr<RecordSource> open_text_source(std::string text, SourceFormat format, const SourceSpec& spec,
                                               const Schema& schema) {
  if (format == SourceFormat::kAuto) format = SourceFormat::kCsv;
  return make_source(std::make_unique<std::istringstream>(std::move(text)), format, spec, schema);
}

std::unique_ptr<RecordSource> open_source(const SourceSpec& spec, const Schema& schema) {
  if (spec.path.empty()) throw ConfigError("no input path given");
  SourceFormat format = spec.format == SourceFormat::kAuto ? infer_format(spec.path) : spec.format;
  if (spec.path == "-") {
    // Buffer standard input so the build can scan it more than once.
    std::string text{std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    return open_text_source(std::move(text), format, spec, schema);
  }
  return make_source(open_stream(spec.path), format, spec, schema);
}

}  // namespace trace
