#include "trace/metric.h"

#include <algorithm>
#include <cctype>
#include <map>

#include "trace/errors.h"

namespace trace {

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::kCount: return "COUNT";
    case MetricKind::kSum: return "SUM";
    case MetricKind::kDistinctCount: return "DISTINCT_COUNT";
    case MetricKind::kPercentile: return "PERCENTILE";
    case MetricKind::kAverage: return "AVERAGE";
    case MetricKind::kRatio: return "RATIO";
    case MetricKind::kDifference: return "DIFFERENCE";
    case MetricKind::kSignedSum: return "SIGNED_SUM";
  }
  return "?";
}

MetricKind parse_metric_kind(std::string_view text) {
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  static const std::map<std::string, MetricKind> kinds = {
      {"COUNT", MetricKind::kCount},         {"SUM", MetricKind::kSum},
      {"DISTINCT_COUNT", MetricKind::kDistinctCount}, {"PERCENTILE", MetricKind::kPercentile},
      {"AVERAGE", MetricKind::kAverage},     {"RATIO", MetricKind::kRatio},
      {"DIFFERENCE", MetricKind::kDifference}, {"SIGNED_SUM", MetricKind::kSignedSum},
  };
  auto it = kinds.find(upper);
  if (it == kinds.end()) throw ConfigError("unknown metric kind '" + std::string(text) + "'");
  return it->second;
}

bool is_base(MetricKind k) {
  return k == MetricKind::kCount || k == MetricKind::kSum || k == MetricKind::kDistinctCount ||
         k == MetricKind::kPercentile;
}

MetricId MetricCatalog::add(MetricDef def) {
  if (find(def.name)) throw ConfigError("duplicate metric name '" + def.name + "'");
  def.id = static_cast<MetricId>(defs_.size());
  defs_.push_back(std::move(def));
  return defs_.back().id;
}

MetricCatalog::MetricCatalog(const std::vector<MetricSpec>& specs) {
  // Bases first so composites can reference them regardless of order.
  for (const MetricSpec& spec : specs) {
    if (spec.name.empty()) throw ConfigError("metric without a name");
    const bool split = spec.kind == MetricKind::kSignedSum || (spec.kind == MetricKind::kSum && spec.sign_split);
    if (!is_base(spec.kind) && !split) continue;
    const bool needs_field = spec.kind != MetricKind::kCount;
    if (needs_field && spec.field.empty()) {
      throw ConfigError("metric '" + spec.name + "' requires a field");
    }
    if (spec.kind == MetricKind::kPercentile && !(spec.p > 0 && spec.p < 1)) {
      throw ConfigError("metric '" + spec.name + "': percentile p must lie in (0, 1)");
    }
    if (spec.sign_split && spec.kind != MetricKind::kSum && spec.kind != MetricKind::kSignedSum) {
      throw ConfigError("metric '" + spec.name + "': sign_split applies to SUM only");
    }
    if (split) {
      MetricDef pos{0, spec.name + ".pos", MetricKind::kSum, spec.field, 0.5, SignPart::kPositive, {}, true};
      MetricDef neg{0, spec.name + ".neg", MetricKind::kSum, spec.field, 0.5, SignPart::kNegative, {}, true};
      const MetricId p = add(pos);
      const MetricId n = add(neg);
      add(MetricDef{0, spec.name, MetricKind::kSignedSum, spec.field, 0.5, SignPart::kWhole, {p, n}, false});
    } else {
      add(MetricDef{0, spec.name, spec.kind, spec.field, spec.p, SignPart::kWhole, {}, false});
    }
  }
  for (const MetricSpec& spec : specs) {
    if (is_base(spec.kind) || spec.kind == MetricKind::kSignedSum) continue;
    if (spec.operands.size() != 2) {
      throw ConfigError("composite metric '" + spec.name + "' needs exactly two operands");
    }
    MetricDef def{0, spec.name, spec.kind, "", 0.5, SignPart::kWhole, {}, false};
    for (const std::string& operand : spec.operands) {
      const MetricDef* base = find(operand);
      if (!base || !base->base()) {
        throw ConfigError("composite metric '" + spec.name + "' references '" + operand +
                          "', which is not a base metric of this cube");
      }
      def.operands.push_back(base->id);
    }
    if (spec.kind == MetricKind::kAverage) {
      if (at(def.operands[0]).kind != MetricKind::kSum || at(def.operands[1]).kind != MetricKind::kCount) {
        throw ConfigError("AVERAGE '" + spec.name + "' must reference a SUM and a COUNT");
      }
    }
    add(std::move(def));
  }
}

MetricCatalog MetricCatalog::from_defs(std::vector<MetricDef> defs) {
  MetricCatalog c;
  for (size_t i = 0; i < defs.size(); ++i) {
    if (defs[i].id != i) throw FormatError("metric ids must be dense and ordered");
    for (MetricId op : defs[i].operands) {
      if (op >= defs.size()) throw FormatError("metric operand out of range");
    }
  }
  c.defs_ = std::move(defs);
  return c;
}

const MetricDef* MetricCatalog::find(std::string_view name) const {
  for (const MetricDef& d : defs_) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

const MetricDef& MetricCatalog::by_name(std::string_view name) const {
  const MetricDef* d = find(name);
  if (!d) throw UnknownMetric("unknown metric '" + std::string(name) + "'");
  return *d;
}

std::vector<MetricId> MetricCatalog::base_ids() const {
  std::vector<MetricId> out;
  for (const MetricDef& d : defs_) {
    if (d.base()) out.push_back(d.id);
  }
  return out;
}

std::vector<MetricId> MetricCatalog::composite_ids() const {
  std::vector<MetricId> out;
  for (const MetricDef& d : defs_) {
    if (!d.base()) out.push_back(d.id);
  }
  return out;
}

std::vector<std::string> MetricCatalog::numeric_fields() const {
  std::vector<std::string> out;
  for (const MetricDef& d : defs_) {
    if ((d.kind == MetricKind::kSum || d.kind == MetricKind::kPercentile) &&
        std::find(out.begin(), out.end(), d.field) == out.end()) {
      out.push_back(d.field);
    }
  }
  return out;
}

std::vector<std::string> MetricCatalog::distinct_fields() const {
  std::vector<std::string> out;
  for (const MetricDef& d : defs_) {
    if (d.kind == MetricKind::kDistinctCount && std::find(out.begin(), out.end(), d.field) == out.end()) {
      out.push_back(d.field);
    }
  }
  return out;
}

}  // namespace trace
