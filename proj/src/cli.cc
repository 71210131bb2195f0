#include "trace/cli.h"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "trace/api.h"
#include "trace/builder.h"
#include "trace/ingest.h"
#include "trace/server.h"
#include "trace/store.h"

namespace trace {

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Column {
  std::string header;
  std::string path;  // JSON pointer into a row
};

std::string cell_text(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v.get<double>());
    return buf;
  }
  return v.dump();
}

void print_table(std::ostream& out, const json& rows, const std::vector<Column>& cols) {
  std::vector<std::vector<std::string>> cells;
  std::vector<size_t> width(cols.size());
  for (size_t c = 0; c < cols.size(); ++c) width[c] = cols[c].header.size();
  for (const json& row : rows) {
    std::vector<std::string> line;
    for (size_t c = 0; c < cols.size(); ++c) {
      const json::json_pointer ptr(cols[c].path);
      line.push_back(row.contains(ptr) ? cell_text(row.at(ptr)) : "-");
      width[c] = std::max(width[c], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  auto emit = [&](const std::vector<std::string>& line) {
    for (size_t c = 0; c < line.size(); ++c) {
      out << line[c];
      if (c + 1 < line.size()) out << std::string(width[c] - line[c].size() + 2, ' ');
    }
    out << "\n";
  };
  std::vector<std::string> header;
  for (const Column& c : cols) header.push_back(c.header);
  emit(header);
  for (const auto& line : cells) emit(line);
}

struct QueryCommand {
  std::string endpoint;
  std::string list_key;
  std::vector<Column> columns;
  ApiParams params;
};

int exit_for_status(int status, const json& body) {
  if (status == 400) return kUsage;
  if (status == 404) return kData;
  const std::string code = body.value("code", "");
  return code == "format_error" || code == "checksum_error" ? kData : kInternal;
}

int run_query(const std::string& cube_dir, const std::string& cube_id, const std::string& format,
              const QueryCommand& cmd, std::ostream& out, std::ostream& err) {
  CubeRegistry registry(cube_dir);
  const std::string id = cube_id.empty() ? registry.cubes().front()->id : cube_id;
  Api api(registry);
  const ApiResponse res = api.handle("/api/cubes/" + id + "/" + cmd.endpoint, cmd.params);
  if (res.status != 200) {
    err << "error: " << res.body.value("message", "request failed") << " (" << res.body.value("code", "") << ")\n";
    return exit_for_status(res.status, res.body);
  }
  const json& rows = cmd.list_key.empty() ? json::array({res.body}) : res.body.at(cmd.list_key);
  if (format == "jsonl") {
    for (const json& row : rows) out << row.dump() << "\n";
  } else {
    print_table(out, rows, cmd.columns);
  }
  return kOk;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Approximate slice cube: build, query, and serve."};
  app.require_subcommand(1);
  std::string format = "table";
  std::string cube_dir, cube_id;

  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"table", "jsonl"}));
  };
  auto add_cube = [&](CLI::App* sub) {
    sub->add_option("--cube", cube_dir, "Cube directory")->required();
    sub->add_option("--cube-id", cube_id, "Cube id when the directory holds several");
  };

  // build
  auto* build_cmd = app.add_subcommand("build", "Materialize a cube from CSV or JSONL input");
  std::string config_path, input_path, out_dir;
  std::optional<size_t> n;
  std::optional<unsigned> max_depth;
  std::optional<double> overflow;
  std::optional<std::string> multipass, granularity, source_format, delimiter, time_format;
  std::optional<bool> refine, detect;
  build_cmd->add_option("--config", config_path, "Cube config (JSON)")->required();
  build_cmd->add_option("--input", input_path, "Input file, or - for stdin")->required();
  build_cmd->add_option("--out", out_dir, "Output cube directory")->required();
  build_cmd->add_option("--n", n, "Slices kept per segment");
  build_cmd->add_option("--max-depth", max_depth, "Largest slice depth");
  build_cmd->add_option("--overflow-factor", overflow, "Sketch growth before a prune");
  build_cmd->add_option("--multipass", multipass, "AUTO, SINGLE or MULTI");
  build_cmd->add_option("--granularity", granularity, "Base time granularity");
  build_cmd->add_option("--refine", refine, "Exact refinement pass (true/false)");
  build_cmd->add_option("--detect-fds", detect, "Functional dependency detection (true/false)");
  build_cmd->add_option("--source-format", source_format, "csv, jsonl or auto");
  build_cmd->add_option("--delimiter", delimiter, "CSV delimiter");
  build_cmd->add_option("--time-format", time_format, "auto, epoch, iso or a strptime pattern");
  add_format(build_cmd);

  // queries
  std::string metric, bucket, within, slice = "[]", gran, from, to, baseline, ranking = "IMPACT", model;
  std::optional<unsigned> depth, window, season;
  size_t k = 10;
  std::optional<double> z, theta;

  auto* topk_cmd = app.add_subcommand("topk", "Largest tracked slices in a bucket");
  auto* diff_cmd = app.add_subcommand("diff", "Compare two buckets slice by slice");
  auto* drivers_cmd = app.add_subcommand("drivers", "Slices that explain a change against a counterfactual");
  auto* anomalies_cmd = app.add_subcommand("anomalies", "Slices far from their baseline");
  auto* series_cmd = app.add_subcommand("timeseries", "One slice across buckets");
  for (CLI::App* sub : {topk_cmd, diff_cmd, drivers_cmd, anomalies_cmd, series_cmd}) {
    add_cube(sub);
    add_format(sub);
    sub->add_option("--metric", metric, "Metric name")->required();
    sub->add_option("--gran", gran, "Bucket granularity (defaults to the cube's base)");
  }
  for (CLI::App* sub : {topk_cmd, drivers_cmd, anomalies_cmd}) sub->add_option("--bucket", bucket, "Bucket")->required();
  for (CLI::App* sub : {topk_cmd, diff_cmd, drivers_cmd}) sub->add_option("--k", k, "Rows to return");
  for (CLI::App* sub : {topk_cmd, diff_cmd}) {
    sub->add_option("--within", within, "Only strict descendants of this slice");
    sub->add_option("--depth", depth, "Only slices of this depth");
  }
  diff_cmd->add_option("--from", from, "Earlier bucket")->required();
  diff_cmd->add_option("--to", to, "Later bucket")->required();
  diff_cmd->add_option("--ranking", ranking, "impact or relative");
  drivers_cmd->add_option("--baseline", baseline, "Counterfactual bucket (default: model prediction)");
  drivers_cmd->add_option("--theta", theta, "Dominance threshold");
  for (CLI::App* sub : {drivers_cmd, anomalies_cmd}) {
    sub->add_option("--z", z, "Significance threshold");
    sub->add_option("--model", model, "TRAILING_MEAN or SEASONAL_NAIVE");
    sub->add_option("--window", window, "Baseline window in buckets");
    sub->add_option("--season", season, "Season length in buckets");
  }
  series_cmd->add_option("--slice", slice, "Slice, e.g. [state=CA]");
  series_cmd->add_option("--from", from, "First timestamp")->required();
  series_cmd->add_option("--to", to, "Last timestamp")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve cubes over HTTP");
  int port = 8080;
  std::string host = "127.0.0.1", cors;
  add_cube(serve_cmd);
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--cors-origin", cors, "Allowed browser origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (build_cmd->parsed()) {
      json doc;
      try {
        doc = json::parse(read_text(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      CubeConfig cfg = config_from_json(doc);
      SourceSpec spec = source_from_json(doc);
      if (n) cfg.n = *n;
      if (max_depth) cfg.max_depth = *max_depth;
      if (overflow) cfg.overflow_factor = *overflow;
      if (multipass) cfg.multipass = parse_pass_mode(*multipass);
      if (granularity) cfg.granularity = parse_granularity(*granularity);
      if (refine) cfg.refine = *refine;
      if (detect) cfg.detect_fds = *detect;
      if (source_format) spec.format = parse_source_format(*source_format);
      if (delimiter) {
        if (delimiter->size() != 1) throw ConfigError("delimiter must be a single character");
        spec.delimiter = (*delimiter)[0];
      }
      if (time_format) spec.time_format = *time_format;
      spec.path = input_path;
      cfg.validate();

      auto source = open_source(spec, Schema::from_config(cfg));
      BuildResult result = build(*source, cfg);
      write_cube(result.cube, out_dir);
      json summary = result.stats.to_json();
      summary["cube_id"] = result.cube.id;
      summary["path"] = out_dir;
      summary["segments"] = result.cube.segments.size();
      if (format == "jsonl") {
        out << summary.dump() << "\n";
      } else {
        out << "cube " << result.cube.id << " written to " << out_dir << "\n";
        for (const char* key : {"rows_read", "bad_rows", "slices_generated", "prunes", "passes", "multipass", "segments"}) {
          out << "  " << key << ": " << cell_text(summary[key]) << "\n";
        }
        for (const auto& [phase, secs] : result.stats.phase_seconds) {
          out << "  " << phase << "_seconds: " << cell_text(secs) << "\n";
        }
      }
      for (const auto& sample : result.stats.bad_row_samples) err << "skipped row: " << sample << "\n";
      return kOk;
    }

    if (serve_cmd->parsed()) {
      CubeRegistry registry(cube_dir);
      Api api(registry);
      HttpServer server(api, ServerOptions{host, port, cors});
      const int bound = server.bind();
      out << "serving " << registry.cubes().size() << " cube(s) on http://" << host << ":" << bound << "\n";
      out.flush();
      server.run();
      return kOk;
    }

    QueryCommand q;
    q.params["metric"] = metric;
    if (!gran.empty()) q.params["gran"] = gran;
    const std::vector<Column> reading_cols = {
        {"rank", "/rank"}, {"slice", "/slice"}, {"lo", "/lo"}, {"hi", "/hi"}, {"exact", "/exact"}, {"share", "/share"}};
    auto model_params = [&]() {
      if (z) q.params["z"] = std::to_string(*z);
      if (!model.empty()) q.params["model"] = model;
      if (window) q.params["window"] = std::to_string(*window);
      if (season) q.params["season"] = std::to_string(*season);
    };
    if (topk_cmd->parsed()) {
      q.endpoint = "topk";
      q.list_key = "rows";
      q.columns = reading_cols;
      q.params["bucket"] = bucket;
      q.params["k"] = std::to_string(k);
      if (!within.empty()) q.params["within"] = within;
      if (depth) q.params["depth"] = std::to_string(*depth);
    } else if (diff_cmd->parsed()) {
      q.endpoint = "diff";
      q.list_key = "rows";
      q.columns = {{"slice", "/slice"},       {"a_lo", "/a/lo"},         {"a_hi", "/a/hi"},
                   {"b_lo", "/b/lo"},         {"b_hi", "/b/hi"},         {"delta_lo", "/delta/lo"},
                   {"delta_hi", "/delta/hi"}, {"undefined", "/undefined"}};
      q.params["from"] = from;
      q.params["to"] = to;
      q.params["k"] = std::to_string(k);
      q.params["ranking"] = ranking;
      if (!within.empty()) q.params["within"] = within;
      if (depth) q.params["depth"] = std::to_string(*depth);
    } else if (drivers_cmd->parsed()) {
      q.endpoint = "drivers";
      q.list_key = "rows";
      q.columns = {{"slice", "/slice"},   {"actual_lo", "/actual/lo"}, {"actual_hi", "/actual/hi"},
                   {"expected", "/expected"}, {"impact", "/impact"},  {"z", "/z"},
                   {"role", "/role"},     {"low_confidence", "/low_confidence"}};
      q.params["bucket"] = bucket;
      q.params["k"] = std::to_string(k);
      if (!baseline.empty()) q.params["baseline"] = baseline;
      if (theta) q.params["theta"] = std::to_string(*theta);
      model_params();
    } else if (anomalies_cmd->parsed()) {
      q.endpoint = "anomalies";
      q.list_key = "rows";
      q.columns = {{"slice", "/slice"}, {"actual_lo", "/actual/lo"}, {"actual_hi", "/actual/hi"},
                   {"expected", "/expected"}, {"sigma", "/sigma"}, {"z", "/z"},
                   {"impact", "/impact"}, {"verdict", "/verdict"}};
      q.params["bucket"] = bucket;
      model_params();
    } else if (series_cmd->parsed()) {
      q.endpoint = "timeseries";
      q.list_key = "points";
      q.columns = {{"bucket", "/bucket"}, {"lo", "/value/lo"}, {"hi", "/value/hi"}, {"exact", "/value/exact"},
                   {"absent", "/absent"}, {"pruned_max", "/pruned_max"}};
      q.params["slice"] = slice;
      q.params["from"] = from;
      q.params["to"] = to;
    }
    return run_query(cube_dir, cube_id, format, q, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TraceError& e) {
    err << "error: " << e.what() << " (" << e.code() << ")\n";
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace trace
