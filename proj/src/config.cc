#include "trace/config.h"

#include <algorithm>
#include <cctype>
#include <set>

#include "trace/errors.h"

namespace trace {

using nlohmann::json;

std::string_view to_string(PassMode m) {
  switch (m) {
    case PassMode::kAuto: return "AUTO";
    case PassMode::kSingle: return "SINGLE";
    case PassMode::kMulti: return "MULTI";
  }
  return "?";
}

PassMode parse_pass_mode(std::string_view text) {
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "AUTO") return PassMode::kAuto;
  if (upper == "SINGLE") return PassMode::kSingle;
  if (upper == "MULTI") return PassMode::kMulti;
  throw ConfigError("multipass must be AUTO, SINGLE or MULTI, got '" + std::string(text) + "'");
}

void CubeConfig::validate() const {
  if (attributes.empty()) throw ConfigError("at least one attribute is required");
  std::set<std::string> seen;
  for (const auto& a : attributes) {
    if (a.empty()) throw ConfigError("attribute names must be non-empty");
    if (!seen.insert(a).second) throw ConfigError("duplicate attribute '" + a + "'");
  }
  if (n < 1) throw ConfigError("n must be at least 1");
  if (max_depth < 1 || max_depth > attributes.size()) {
    throw ConfigError("max_depth must lie in [1, number of attributes]");
  }
  if (!(overflow_factor >= 1.0)) throw ConfigError("overflow_factor must be >= 1");
  if (fd_violation_tolerance < 0 || fd_violation_tolerance >= 1) {
    throw ConfigError("fd_violation_tolerance must lie in [0, 1)");
  }
  if (granularity == Granularity::kAll) throw ConfigError("base granularity cannot be ALL");
  for (Granularity g : rollups) {
    if (!nests_in(granularity, g) || g == Granularity::kAll) {
      throw ConfigError("rollup granularity " + std::string(to_string(g)) + " does not nest over base " +
                        std::string(to_string(granularity)));
    }
  }
  if (metrics.empty()) throw ConfigError("at least one metric is required");
  MetricCatalog check(metrics);
  (void)check;
}

std::vector<Granularity> CubeConfig::effective_rollups() const {
  if (!rollups.empty()) return rollups;
  std::vector<Granularity> out;
  for (Granularity g : {Granularity::kDay, Granularity::kWeek, Granularity::kMonth}) {
    if (nests_in(granularity, g)) out.push_back(g);
  }
  return out;
}

bool CubeConfig::use_multipass() const {
  switch (multipass) {
    case PassMode::kSingle: return false;
    case PassMode::kMulti: return true;
    case PassMode::kAuto: return attributes.size() > 20 || max_depth >= 3;
  }
  return false;
}

namespace {

json metric_to_json(const MetricSpec& m) {
  json j = {{"name", m.name}, {"kind", std::string(to_string(m.kind))}};
  if (!m.field.empty()) j["field"] = m.field;
  if (m.kind == MetricKind::kPercentile) j["p"] = m.p;
  switch (m.kind) {
    case MetricKind::kAverage:
      j["sum"] = m.operands.at(0);
      j["count"] = m.operands.at(1);
      break;
    case MetricKind::kRatio:
      j["numerator"] = m.operands.at(0);
      j["denominator"] = m.operands.at(1);
      break;
    case MetricKind::kDifference:
      j["a"] = m.operands.at(0);
      j["b"] = m.operands.at(1);
      break;
    default: break;
  }
  if (m.sign_split) j["sign_split"] = true;
  return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.contains(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

MetricSpec metric_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("metric entries must be objects");
  reject_unknown(j, {"name", "kind", "field", "p", "sum", "count", "numerator", "denominator", "a", "b", "sign_split"},
                 "metric");
  MetricSpec m;
  m.name = get_or<std::string>(j, "name", "");
  m.kind = parse_metric_kind(get_or<std::string>(j, "kind", ""));
  m.field = get_or<std::string>(j, "field", "");
  m.p = get_or<double>(j, "p", 0.5);
  m.sign_split = get_or<bool>(j, "sign_split", false);
  auto operand = [&](const char* key) {
    std::string v = get_or<std::string>(j, key, "");
    if (v.empty()) throw ConfigError("metric '" + m.name + "' requires key '" + key + "'");
    return v;
  };
  switch (m.kind) {
    case MetricKind::kAverage: m.operands = {operand("sum"), operand("count")}; break;
    case MetricKind::kRatio: m.operands = {operand("numerator"), operand("denominator")}; break;
    case MetricKind::kDifference: m.operands = {operand("a"), operand("b")}; break;
    default: break;
  }
  return m;
}

}  // namespace

json to_json(const CubeConfig& cfg) {
  json metrics = json::array();
  for (const auto& m : cfg.metrics) metrics.push_back(metric_to_json(m));
  json rollups = json::array();
  for (Granularity g : cfg.rollups) rollups.push_back(std::string(to_string(g)));
  return {
      {"attributes", cfg.attributes},
      {"time_column", cfg.time_column},
      {"granularity", std::string(to_string(cfg.granularity))},
      {"rollups", rollups},
      {"metrics", metrics},
      {"n", cfg.n},
      {"max_depth", cfg.max_depth},
      {"overflow_factor", cfg.overflow_factor},
      {"multipass", std::string(to_string(cfg.multipass))},
      {"detect_fds", cfg.detect_fds},
      {"fd_sample_size", cfg.fd_sample_size},
      {"fd_violation_tolerance", cfg.fd_violation_tolerance},
      {"refine", cfg.refine},
      {"distinct_k", cfg.distinct_k},
      {"quantile_k", cfg.quantile_k},
      {"max_bad_row_fraction", cfg.max_bad_row_fraction},
  };
}

CubeConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be an object");
  reject_unknown(doc,
                 {"attributes", "time_column", "granularity", "rollups", "metrics", "n", "max_depth",
                  "overflow_factor", "multipass", "detect_fds", "fd_sample_size", "fd_violation_tolerance",
                  "refine", "distinct_k", "quantile_k", "max_bad_row_fraction", "source"},
                 "config");
  CubeConfig cfg;
  cfg.attributes = get_or<std::vector<std::string>>(doc, "attributes", {});
  cfg.time_column = get_or<std::string>(doc, "time_column", cfg.time_column);
  try {
    cfg.granularity = parse_granularity(get_or<std::string>(doc, "granularity", "DAY"));
    for (const auto& g : get_or<std::vector<std::string>>(doc, "rollups", {})) {
      cfg.rollups.push_back(parse_granularity(g));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (auto it = doc.find("metrics"); it != doc.end()) {
    if (!it->is_array()) throw ConfigError("metrics must be an array");
    for (const auto& m : *it) cfg.metrics.push_back(metric_from_json(m));
  }
  cfg.n = get_or<size_t>(doc, "n", cfg.n);
  // An omitted depth never exceeds the attribute count.
  const unsigned default_depth = std::min<unsigned>(cfg.max_depth, static_cast<unsigned>(cfg.attributes.size()));
  cfg.max_depth = get_or<unsigned>(doc, "max_depth", std::max(default_depth, 1u));
  cfg.overflow_factor = get_or<double>(doc, "overflow_factor", cfg.overflow_factor);
  cfg.multipass = parse_pass_mode(get_or<std::string>(doc, "multipass", "AUTO"));
  cfg.detect_fds = get_or<bool>(doc, "detect_fds", cfg.detect_fds);
  cfg.fd_sample_size = get_or<size_t>(doc, "fd_sample_size", cfg.fd_sample_size);
  cfg.fd_violation_tolerance = get_or<double>(doc, "fd_violation_tolerance", cfg.fd_violation_tolerance);
  cfg.refine = get_or<bool>(doc, "refine", cfg.refine);
  cfg.distinct_k = get_or<uint32_t>(doc, "distinct_k", cfg.distinct_k);
  cfg.quantile_k = get_or<uint32_t>(doc, "quantile_k", cfg.quantile_k);
  cfg.max_bad_row_fraction = get_or<double>(doc, "max_bad_row_fraction", cfg.max_bad_row_fraction);
  cfg.validate();
  return cfg;
}

}  // namespace trace
