#include "trace/api.h"

#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>

#include "trace/store.h"

namespace trace {

namespace fs = std::filesystem;
using nlohmann::json;

CubeRegistry::CubeRegistry(const fs::path& root) {
  if (fs::exists(root / "manifest.json")) {
    add(read_cube(root));
    return;
  }
  if (!fs::is_directory(root)) throw FormatError("'" + root.string() + "' is not a cube directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) add(read_cube(d));
  if (cubes_.empty()) throw FormatError("no cubes found under '" + root.string() + "'");
}

void CubeRegistry::add(Cube cube) { cubes_.push_back(std::make_unique<Cube>(std::move(cube))); }

const Cube& CubeRegistry::get(std::string_view id) const {
  for (const auto& c : cubes_)
    if (c->id == id) return *c;
  throw ApiError(404, "cube_not_found", "no cube with id '" + std::string(id) + "'", {{"cube", id}});
}

namespace render {

json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

json bounded(const std::optional<BoundedValue>& v) {
  if (!v || !std::isfinite(v->lo) || !std::isfinite(v->hi)) return nullptr;
  return {{"lo", v->lo}, {"hi", v->hi}, {"exact", v->exact}};
}

json reading(const SliceReading& r, const SliceFormatter& fmt) {
  json j = {{"rank", r.rank}, {"slice", fmt.render(r.slice)}};
  if (r.undefined) {
    j["lo"] = nullptr;
    j["hi"] = nullptr;
    j["exact"] = false;
  } else {
    j["lo"] = r.value.lo;
    j["hi"] = r.value.hi;
    j["exact"] = r.value.exact;
  }
  j["share"] = r.share;
  j["undefined"] = r.undefined;
  return j;
}

json diff_row(const DiffRow& r, const SliceFormatter& fmt) {
  json j = {{"slice", fmt.render(r.slice)},
            {"a", bounded(r.value_a)},
            {"b", bounded(r.value_b)},
            {"delta", r.undefined ? json(nullptr) : bounded(r.delta)},
            {"undefined", r.undefined}};
  if (r.z) j["z"] = number(*r.z);
  return j;
}

json series_point(const SeriesPoint& p) {
  return {{"bucket", format_bucket(p.bucket)},
          {"value", bounded(p.value)},
          {"absent", !p.value && !p.undefined},
          {"undefined", p.undefined},
          {"pruned_max", p.pruned_max}};
}

json insight_row(const InsightRow& r, const SliceFormatter& fmt) {
  auto opt = [](const std::optional<double>& v) { return v ? number(*v) : json(nullptr); };
  return {{"slice", fmt.render(r.slice)},
          {"actual", bounded(r.actual)},
          {"expected", opt(r.expected)},
          {"sigma", opt(r.sigma)},
          {"z", opt(r.z)},
          {"impact", number(r.impact)},
          {"verdict", r.verdict ? json(std::string(to_string(*r.verdict))) : json(nullptr)},
          {"role", r.role ? json(std::string(to_string(*r.role))) : json(nullptr)},
          {"low_confidence", r.low_confidence}};
}

json metric(const MetricDef& m, const MetricCatalog& catalog) {
  json ops = json::array();
  for (MetricId id : m.operands) ops.push_back(catalog.at(id).name);
  json j = {{"id", m.id}, {"name", m.name}, {"kind", std::string(to_string(m.kind))}, {"base", m.base()},
            {"hidden", m.hidden}, {"operands", ops}};
  if (!m.field.empty()) j["field"] = m.field;
  if (m.kind == MetricKind::kPercentile) j["p"] = m.p;
  return j;
}

json cube_summary(const Cube& cube) {
  json metrics = json::array();
  for (const MetricDef& m : cube.metrics.all())
    if (!m.hidden) metrics.push_back(m.name);
  json grans = json::array();
  for (Granularity g : cube.granularities()) grans.push_back(std::string(to_string(g)));
  json first = nullptr, last = nullptr;
  if (!cube.metrics.base_ids().empty()) {
    auto buckets = cube.buckets(cube.metrics.base_ids().front(), cube.config.granularity);
    if (!buckets.empty()) {
      first = format_bucket(buckets.front());
      last = format_bucket(buckets.back());
    }
  }
  return {{"id", cube.id},
          {"created_at", cube.created_at},
          {"attributes", cube.dicts.attributes.texts()},
          {"metrics", metrics},
          {"granularity", std::string(to_string(cube.config.granularity))},
          {"granularities", grans},
          {"first_bucket", first},
          {"last_bucket", last},
          {"n", cube.config.n},
          {"max_depth", cube.config.max_depth},
          {"segments", cube.segments.size()}};
}

json error(const TraceError& e) {
  json details = json::object();
  if (const auto* api = dynamic_cast<const ApiError*>(&e)) details = api->details();
  return {{"code", e.code()}, {"message", e.what()}, {"details", details}};
}

}  // namespace render

int http_status(const TraceError& e) {
  if (const auto* api = dynamic_cast<const ApiError*>(&e)) return api->status();
  const std::string& c = e.code();
  if (c == "metric_not_found" || c == "bucket_not_found" || c == "slice_not_found" || c == "cube_not_found") return 404;
  if (c == "format_error" || c == "checksum_error") return 500;
  return 400;
}

namespace {

constexpr size_t kDefaultK = 10;

const std::string& required(const ApiParams& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end() || it->second.empty()) {
    throw ApiError(400, "missing_parameter", "parameter '" + key + "' is required", {{"parameter", key}});
  }
  return it->second;
}

std::optional<std::string> optional_param(const ApiParams& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

template <typename T>
T parse_number(const ApiParams& p, const std::string& key, T fallback) {
  auto text = optional_param(p, key);
  if (!text) return fallback;
  T v{};
  const char* end = text->data() + text->size();
  auto [ptr, ec] = std::from_chars(text->data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ApiError(400, "invalid_argument", "parameter '" + key + "' is not a valid number", {{"parameter", key}});
  }
  return v;
}

double parse_real(const ApiParams& p, const std::string& key, double fallback) {
  auto text = optional_param(p, key);
  if (!text) return fallback;
  try {
    size_t used = 0;
    double v = std::stod(*text, &used);
    if (used == text->size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw ApiError(400, "invalid_argument", "parameter '" + key + "' is not a valid number", {{"parameter", key}});
}

Granularity granularity_of(const Cube& cube, const ApiParams& p) {
  auto g = optional_param(p, "gran");
  return g ? parse_granularity(*g) : cube.config.granularity;
}

TimeBucket bucket_param(const Cube& cube, const ApiParams& p, const std::string& key) {
  return parse_bucket(required(p, key), granularity_of(cube, p));
}

Slice slice_param(const Cube& cube, const ApiParams& p, const std::string& key, const char* fallback = nullptr) {
  auto text = optional_param(p, key);
  if (!text && !fallback) required(p, key);
  return cube.formatter().parse(text ? *text : fallback);
}

SliceFilter filter_param(const Cube& cube, const ApiParams& p) {
  SliceFilter f;
  if (auto w = optional_param(p, "within")) f.within = cube.formatter().parse(*w);
  if (optional_param(p, "depth")) f.depth = parse_number<unsigned>(p, "depth", 0);
  return f;
}

BaselineModel model_param(const ApiParams& p) {
  BaselineModel m;
  if (auto kind = optional_param(p, "model")) m.kind = parse_model_kind(*kind);
  m.window = parse_number<unsigned>(p, "window", m.window);
  m.season = parse_number<unsigned>(p, "season", m.season);
  m.min_history = parse_number<unsigned>(p, "min_history", m.min_history);
  if (m.window == 0) throw ApiError(400, "invalid_argument", "window must be at least 1");
  return m;
}

json rows_of(const std::vector<SliceReading>& rs, const SliceFormatter& fmt) {
  json rows = json::array();
  for (const auto& r : rs) rows.push_back(render::reading(r, fmt));
  return rows;
}

json rows_of(const std::vector<InsightRow>& rs, const SliceFormatter& fmt) {
  json rows = json::array();
  for (const auto& r : rs) rows.push_back(render::insight_row(r, fmt));
  return rows;
}

std::string incident_id() {
  std::random_device rd;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%08x%08x", rd(), rd());
  return buf;
}

}  // namespace

ApiResponse Api::handle(std::string_view path, const ApiParams& params) const {
  try {
    constexpr std::string_view kPrefix = "/api/cubes";
    if (path.substr(0, kPrefix.size()) != kPrefix) throw ApiError(404, "not_found", "unknown path");
    std::string_view rest = path.substr(kPrefix.size());
    if (rest.empty() || rest == "/") {
      json cubes = json::array();
      for (const auto& c : registry_->cubes()) cubes.push_back(render::cube_summary(*c));
      return {200, {{"cubes", cubes}}};
    }
    if (rest.front() != '/') throw ApiError(404, "not_found", "unknown path");
    rest.remove_prefix(1);
    const size_t slash = rest.find('/');
    const std::string_view id = rest.substr(0, slash);
    const Cube& cube = registry_->get(id);
    const std::string_view endpoint = slash == std::string_view::npos ? "" : rest.substr(slash + 1);
    if (endpoint.empty()) return {200, render::cube_summary(cube)};
    return {200, dispatch(cube, endpoint, params)};
  } catch (const TraceError& e) {
    return {http_status(e), render::error(e)};
  } catch (const std::exception& e) {
    const std::string incident = incident_id();
    std::cerr << "internal error " << incident << ": " << e.what() << "\n";
    return {500, {{"code", "internal"}, {"message", "internal error"}, {"details", {{"incident", incident}}}}};
  }
}

json Api::dispatch(const Cube& cube, std::string_view endpoint, const ApiParams& p) const {
  const SliceFormatter fmt = cube.formatter();
  if (endpoint == "metrics") {
    json metrics = json::array();
    for (const MetricDef& m : cube.metrics.all()) metrics.push_back(render::metric(m, cube.metrics));
    return {{"metrics", metrics}};
  }
  if (endpoint == "parents") {
    const Slice s = slice_param(cube, p, "slice");
    auto metric = optional_param(p, "metric");
    auto bucket_text = optional_param(p, "bucket");
    json parents = json::array();
    for (const Slice& parent : parents_of(s)) {
      json row = {{"slice", fmt.render(parent)}};
      if (metric && bucket_text) {
        const TimeBucket b = parse_bucket(*bucket_text, granularity_of(cube, p));
        try {
          row["value"] = render::bounded(slice_value(cube, *metric, b, parent));
        } catch (const DivisionUndefined&) {
          row["value"] = nullptr;
          row["undefined"] = true;
        }
      }
      parents.push_back(std::move(row));
    }
    return {{"slice", fmt.render(s)}, {"parents", parents}};
  }

  const std::string& metric = required(p, "metric");
  if (endpoint == "topk" || endpoint == "children") {
    const TimeBucket b = bucket_param(cube, p, "bucket");
    SliceFilter filter;
    size_t k = kDefaultK;
    if (endpoint == "topk") {
      filter = filter_param(cube, p);
      k = parse_number<size_t>(p, "k", kDefaultK);
    } else {
      const Slice s = slice_param(cube, p, "slice", "[]");
      filter.within = s;
      filter.depth = unsigned(s.depth() + 1);
      k = parse_number<size_t>(p, "k", std::numeric_limits<size_t>::max());
    }
    if (k == 0) throw ApiError(400, "invalid_argument", "k must be at least 1");
    return {{"metric", metric}, {"bucket", format_bucket(b)}, {"rows", rows_of(topk(cube, metric, b, k, filter), fmt)}};
  }
  if (endpoint == "slice") {
    const TimeBucket b = bucket_param(cube, p, "bucket");
    const Slice s = slice_param(cube, p, "slice");
    const MetricDef& def = resolve_metric(cube, metric);
    double pm = 0;
    for (MetricId id : def.base() ? std::vector<MetricId>{def.id} : def.operands) {
      pm = std::max(pm, require_segment(cube, id, b).pruned_max);
    }
    json out = {{"metric", metric}, {"bucket", format_bucket(b)}, {"slice", fmt.render(s)}, {"pruned_max", pm}};
    try {
      auto v = slice_value(cube, metric, b, s);
      out["value"] = render::bounded(v);
      out["absent"] = !v.has_value();
      out["undefined"] = false;
    } catch (const DivisionUndefined&) {
      out["value"] = nullptr;
      out["absent"] = false;
      out["undefined"] = true;
    }
    return out;
  }
  if (endpoint == "timeseries") {
    const Granularity g = granularity_of(cube, p);
    const Slice s = slice_param(cube, p, "slice", "[]");
    int64_t from, to;
    try {
      from = parse_iso_timestamp(required(p, "from"));
      to = parse_iso_timestamp(required(p, "to"));
    } catch (const InvalidArgument& e) {
      throw ApiError(400, "invalid_argument", e.what());
    }
    json points = json::array();
    for (const SeriesPoint& pt : timeseries(cube, metric, s, g, from, to)) points.push_back(render::series_point(pt));
    return {{"metric", metric}, {"slice", fmt.render(s)}, {"granularity", std::string(to_string(g))}, {"points", points}};
  }
  if (endpoint == "diff") {
    const TimeBucket a = bucket_param(cube, p, "from");
    const TimeBucket b = bucket_param(cube, p, "to");
    const Ranking ranking = parse_ranking(optional_param(p, "ranking").value_or("IMPACT"));
    json rows = json::array();
    for (const DiffRow& r : diff(cube, metric, a, b, parse_number<size_t>(p, "k", kDefaultK), ranking,
                                 filter_param(cube, p))) {
      rows.push_back(render::diff_row(r, fmt));
    }
    return {{"metric", metric}, {"from", format_bucket(a)}, {"to", format_bucket(b)},
            {"ranking", std::string(to_string(ranking))}, {"rows", rows}};
  }
  if (endpoint == "anomalies") {
    const TimeBucket b = bucket_param(cube, p, "bucket");
    const double z = parse_real(p, "z", kDefaultZ);
    return {{"metric", metric}, {"bucket", format_bucket(b)}, {"z", z},
            {"rows", rows_of(anomalies(cube, metric, b, model_param(p), z), fmt)}};
  }
  if (endpoint == "drivers") {
    const TimeBucket b = bucket_param(cube, p, "bucket");
    Counterfactual cf;
    cf.model = model_param(p);
    if (optional_param(p, "baseline")) {
      cf.kind = Counterfactual::Kind::kBaselineBucket;
      cf.baseline = bucket_param(cube, p, "baseline");
    }
    const size_t k = parse_number<size_t>(p, "k", kDefaultK);
    const double theta = parse_real(p, "theta", kDefaultDominance);
    const double z = parse_real(p, "z", kDefaultZ);
    json out = {{"metric", metric}, {"bucket", format_bucket(b)},
                {"rows", rows_of(drivers(cube, metric, b, cf, k, theta, z), fmt)}};
    out["counterfactual"] = cf.kind == Counterfactual::Kind::kModel ? json(std::string(to_string(cf.model.kind)))
                                                                      : json(format_bucket(cf.baseline));
    return out;
  }
  throw ApiError(404, "not_found", "unknown endpoint '" + std::string(endpoint) + "'");
}

}  // namespace trace
