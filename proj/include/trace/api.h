#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trace/cube.h"
#include "trace/errors.h"
#include "trace/insight.h"
#include "trace/query.h"

namespace trace {

// Error surfaced to API clients as {"code", "message", "details"}.
class ApiError : public TraceError {
 public:
  ApiError(int status, std::string code, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : TraceError(std::move(code), message), status_(status), details_(std::move(details)) {}

  int status() const { return status_; }
  const nlohmann::json& details() const { return details_; }

 private:
  int status_;
  nlohmann::json details_;
};

// Cubes served from one directory: either a cube itself (holds
// manifest.json) or a parent of several cube directories.
class CubeRegistry {
 public:
  explicit CubeRegistry(const std::filesystem::path& root);
  void add(Cube cube);

  // Throws ApiError 404 "cube_not_found".
  const Cube& get(std::string_view id) const;
  const std::vector<std::unique_ptr<Cube>>& cubes() const { return cubes_; }

 private:
  std::vector<std::unique_ptr<Cube>> cubes_;
};

// JSON shapes shared by the CLI (--format jsonl) and the HTTP API.
namespace render {

nlohmann::json bounded(const std::optional<BoundedValue>& v);
// Finite numbers as numbers, infinities as "inf" / "-inf".
nlohmann::json number(double v);
nlohmann::json reading(const SliceReading& r, const SliceFormatter& fmt);
nlohmann::json diff_row(const DiffRow& r, const SliceFormatter& fmt);
nlohmann::json series_point(const SeriesPoint& p);
nlohmann::json insight_row(const InsightRow& r, const SliceFormatter& fmt);
nlohmann::json metric(const MetricDef& m, const MetricCatalog& catalog);
nlohmann::json cube_summary(const Cube& cube);
nlohmann::json error(const TraceError& e);

}  // namespace render

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

using ApiParams = std::map<std::string, std::string>;

// Routes /api/cubes[/{id}/{endpoint}] to the query and insight modules.
// Never throws; failures become ApiError bodies.
class Api {
 public:
  explicit Api(const CubeRegistry& registry) : registry_(&registry) {}

  ApiResponse handle(std::string_view path, const ApiParams& params) const;

 private:
  nlohmann::json dispatch(const Cube& cube, std::string_view endpoint, const ApiParams& params) const;

  const CubeRegistry* registry_;
};

// HTTP status for an engine error code.
int http_status(const TraceError& e);

}  // namespace trace
