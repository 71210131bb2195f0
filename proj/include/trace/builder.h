#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trace/config.h"
#include "trace/cube.h"
#include "trace/record.h"
#include "trace/topn_sketch.h"

namespace trace {

struct BuildStats {
  uint64_t rows_read = 0;  // valid rows in the first data pass
  uint64_t bad_rows = 0;
  uint64_t slices_generated = 0;  // slice candidates handed to sketches, summed over sketches
  uint64_t prunes = 0;
  uint32_t passes = 0;  // full or sample scans of the input
  bool multipass = false;
  std::vector<std::string> bad_row_samples;  // first few row errors
  std::vector<std::pair<std::string, double>> phase_seconds;

  nlohmann::json to_json() const;
};

struct BuildResult {
  Cube cube;
  BuildStats stats;
};

// Picks single-pass or level-wise per cfg.multipass.
BuildResult build(RecordSource& source, const CubeConfig& cfg);
// One scan generating every slice up to max_depth per record.
BuildResult build_cube(RecordSource& source, const CubeConfig& cfg);
// One scan per depth; depth-k slices are only counted when all their
// depth-(k-1) parents survived the previous scan. Throws NotRescannable.
BuildResult build_multipass(RecordSource& source, const CubeConfig& cfg);

// Reads up to cfg.fd_sample_size rows from the source's current position and
// returns the transitively reduced dependency graph.
FDGraph detect_fds(RecordSource& sample, const CubeConfig& cfg);
FDGraph detect_fds(std::span<const Record> sample, size_t num_attributes, double violation_tolerance);

// Union of the tracked slices of several sketches.
std::vector<Slice> union_slice_sets(std::span<const TopNSketch* const> sketches);

// Step-wise driver behind the build functions; exposed so tests can inspect
// sketches between phases.
class CubeBuilder {
 public:
  CubeBuilder(RecordSource& source, const CubeConfig& cfg);

  void detect_dependencies();
  void set_dependencies(FDGraph fds) { fds_ = std::move(fds); }
  void run_single_pass();
  void run_multipass();
  // Extends every base of a composite to the union of the bases' slices.
  void union_composites();
  // Rescans the input to replace tracked ranges with exact values (SUM,
  // COUNT) or summary point estimates (DISTINCT_COUNT, PERCENTILE).
  void refine();
  BuildResult finish();

  bool needs_refine_pass() const;
  const TopNSketch* sketch(MetricId metric, const TimeBucket& bucket) const;
  TopNSketch* mutable_sketch(MetricId metric, const TimeBucket& bucket);
  const FDGraph& dependencies() const { return fds_; }
  const BuildStats& stats() const { return stats_; }
  const MetricCatalog& catalog() const { return catalog_; }

 private:
  struct Base {
    MetricId id;
    MetricKind kind;
    SignPart sign;
    size_t numeric_slot = 0;
    size_t distinct_slot = 0;
    double p = 0.5;
  };
  using SketchMap = std::map<TimeBucket, TopNSketch>;
  struct Refined {
    SliceMap<uint32_t> slot;
    std::vector<double> sums;
    std::vector<Summary> summaries;
    std::optional<Summary> total_summary;
  };

  // Runs `on_record(record)` over every well-formed row with weights_ set.
  // Only the first scan counts rows and enforces the bad-row limit.
  template <typename OnRecord>
  void scan(OnRecord&& on_record);
  bool weigh(const Record& r, std::string* error);
  TopNSketch& sketch_in(SketchMap& map, const TimeBucket& b);
  void check_bad_rows() const;
  void time_phase(const std::string& name, double seconds);

  RecordSource& source_;
  CubeConfig cfg_;
  MetricCatalog catalog_;
  Schema schema_;
  std::vector<Base> bases_;
  FDGraph fds_;
  TopNSketch::TieKey tie_key_;
  std::vector<SketchMap> sketches_;  // per base
  std::vector<std::map<TimeBucket, Refined>> refined_;  // per base, DISTINCT/PERCENTILE only
  std::vector<double> weights_;  // per base, for the current record
  BuildStats stats_;
  bool scanned_ = false;
  bool counted_ = false;
};

}  // namespace trace
