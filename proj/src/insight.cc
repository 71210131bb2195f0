#include "trace/insight.h"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include "trace/errors.h"

namespace trace {

namespace {

double population_stddev(const std::vector<double>& xs) {
  if (xs.empty()) return 0;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / double(xs.size()));
}

// Midpoint of the metric at one bucket; nullopt when untracked, when the
// bucket has no segment, or when a composite is undefined there.
std::optional<double> midpoint_at(const Cube& cube, const MetricDef& def, const TimeBucket& b, const Slice& slice) {
  const MetricId probe = def.base() ? def.id : def.operands.at(0);
  if (!cube.find_segment(probe, b)) return std::nullopt;
  try {
    auto v = def.base() ? slice_value(cube, def.name, b, slice) : composite_value(cube, def, b, slice);
    if (!v) return std::nullopt;
    return v->midpoint();
  } catch (const DivisionUndefined&) {
    return std::nullopt;
  }
}

std::optional<Expectation> expect_for(const Cube& cube, const MetricDef& def, const Slice& slice,
                                      const TimeBucket& bucket, const BaselineModel& model) {
  std::vector<std::optional<double>> history(model.window);
  TimeBucket b = bucket;
  for (size_t i = model.window; i-- > 0;) {
    b = previous_bucket(b);
    history[i] = midpoint_at(cube, def, b, slice);
  }
  return expect_from_history(history, model);
}

// Visits every strict subset of `s`'s pairs, [] included.
template <typename Visit>
void for_each_strict_subset(const Slice& s, Visit&& visit) {
  const size_t d = s.depth();
  if (d == 0 || d > 20) return;
  const uint32_t full = (1u << d) - 1;
  for (uint32_t mask = 0; mask < full; ++mask) {
    Slice sub;
    for (size_t i = 0; i < d; ++i)
      if (mask & (1u << i)) sub.push_back_ordered(s[i]);
    visit(static_cast<const Slice&>(sub));
  }
}

}  // namespace

ModelKind parse_model_kind(std::string_view text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "TRAILING_MEAN") return ModelKind::kTrailingMean;
  if (up == "SEASONAL_NAIVE") return ModelKind::kSeasonalNaive;
  throw InvalidArgument("unknown model '" + std::string(text) + "' (expected TRAILING_MEAN or SEASONAL_NAIVE)");
}

std::string_view to_string(ModelKind k) { return k == ModelKind::kTrailingMean ? "TRAILING_MEAN" : "SEASONAL_NAIVE"; }

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kAnomalous: return "ANOMALOUS";
    case Verdict::kNormal: return "NORMAL";
    case Verdict::kInsufficientHistory: return "INSUFFICIENT_HISTORY";
  }
  return "?";
}

std::string_view to_string(Role r) { return r == Role::kDriver ? "DRIVER" : "CONTEXT"; }

std::optional<Expectation> expect_from_history(std::span<const std::optional<double>> history,
                                               const BaselineModel& model) {
  const size_t w = history.size();
  const size_t need = std::max<size_t>(1, std::min<size_t>(model.min_history, w));
  std::vector<double> tracked;
  for (const auto& h : history)
    if (h) tracked.push_back(*h);
  if (tracked.size() < need) return std::nullopt;

  std::vector<double> steps;
  for (size_t i = 1; i < tracked.size(); ++i) steps.push_back(tracked[i] - tracked[i - 1]);

  Expectation e;
  e.history = tracked.size();
  if (model.kind == ModelKind::kTrailingMean) {
    double sum = 0;
    for (double x : tracked) sum += x;
    e.prediction = sum / double(tracked.size());
    e.sigma = population_stddev(steps);
    return e;
  }

  if (model.season == 0) throw InvalidArgument("season length must be at least 1");
  const size_t s = model.season;
  double sum = 0;
  size_t count = 0;
  for (size_t back = s; back <= w; back += s) {
    if (const auto& h = history[w - back]) {
      sum += *h;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  e.prediction = sum / double(count);
  std::vector<double> seasonal_steps;
  for (size_t i = s; i < w; ++i)
    if (history[i] && history[i - s]) seasonal_steps.push_back(*history[i] - *history[i - s]);
  e.sigma = population_stddev(seasonal_steps.empty() ? steps : seasonal_steps);
  return e;
}

std::optional<Expectation> expected(const Cube& cube, std::string_view metric, const Slice& slice,
                                    const TimeBucket& bucket, const BaselineModel& model) {
  return expect_for(cube, resolve_metric(cube, metric), slice, bucket, model);
}

Significance significance(double delta, double sigma, double z_star) {
  if (sigma < 0) throw InvalidArgument("sigma must be non-negative");
  if (delta == 0) return {0, false};
  if (sigma == 0) return {std::copysign(std::numeric_limits<double>::infinity(), delta), true};
  const double z = delta / sigma;
  return {z, std::abs(z) >= z_star};
}

std::vector<InsightRow> anomalies(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                  const BaselineModel& model, double z_star) {
  const MetricDef& def = resolve_metric(cube, metric);
  std::vector<InsightRow> rows;
  for (const Slice& s : tracked_slices(cube, def, bucket)) {
    if (s.empty()) continue;
    InsightRow row;
    row.slice = s;
    try {
      row.actual = def.base() ? value_or_floor(cube, def, bucket, s) : composite_value(cube, def, bucket, s);
    } catch (const DivisionUndefined&) {
      continue;
    }
    if (!row.actual) continue;
    auto e = expect_for(cube, def, s, bucket, model);
    if (!e) {
      row.verdict = Verdict::kInsufficientHistory;
    } else {
      row.expected = e->prediction;
      row.sigma = e->sigma;
      row.impact = row.actual->midpoint() - e->prediction;
      const Significance sig = significance(row.impact, e->sigma, z_star);
      row.z = sig.z;
      row.verdict = sig.significant ? Verdict::kAnomalous : Verdict::kNormal;
    }
    rows.push_back(std::move(row));
  }
  const SliceFormatter fmt = cube.formatter();
  std::vector<std::string> text(rows.size());
  std::vector<size_t> order(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    text[i] = fmt.render(rows[i].slice);
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const bool ia = rows[a].verdict == Verdict::kInsufficientHistory;
    const bool ib = rows[b].verdict == Verdict::kInsufficientHistory;
    if (ia != ib) return ib;
    const double ma = std::abs(rows[a].impact), mb = std::abs(rows[b].impact);
    if (ma != mb) return ma > mb;
    return text[a] < text[b];
  });
  std::vector<InsightRow> out;
  out.reserve(rows.size());
  for (size_t i : order) out.push_back(std::move(rows[i]));
  return out;
}

void assign_roles(std::vector<InsightRow>& rows, const SliceMap<double>& tracked, double theta) {
  std::stable_sort(rows.begin(), rows.end(), [](const InsightRow& a, const InsightRow& b) {
    if (a.slice.depth() != b.slice.depth()) return a.slice.depth() < b.slice.depth();
    const double ma = std::abs(a.impact), mb = std::abs(b.impact);
    if (ma != mb) return ma > mb;
    return a.slice < b.slice;
  });

  // Largest and smallest impact among tracked descendants of each row.
  SliceMap<size_t> index;
  for (size_t i = 0; i < rows.size(); ++i) index.emplace(rows[i].slice, i);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> desc_max(rows.size(), -kInf), desc_min(rows.size(), kInf);
  for (const auto& [slice, impact] : tracked) {
    for_each_strict_subset(slice, [&](const Slice& sub) {
      auto it = index.find(sub);
      if (it == index.end()) return;
      desc_max[it->second] = std::max(desc_max[it->second], impact);
      desc_min[it->second] = std::min(desc_min[it->second], impact);
    });
  }

  SliceMap<double> visited;
  for (size_t i = 0; i < rows.size(); ++i) {
    InsightRow& row = rows[i];
    const double delta = row.impact;
    bool context = delta == 0;
    if (!context) {
      context = delta > 0 ? desc_max[i] >= theta * delta : desc_min[i] <= theta * delta;
    }
    if (!context) {
      for_each_strict_subset(row.slice, [&](const Slice& sub) {
        auto it = visited.find(sub);
        if (it != visited.end() && std::abs(delta) <= (1 - theta) * std::abs(it->second)) context = true;
      });
    }
    row.role = context ? Role::kContext : Role::kDriver;
    visited.emplace(row.slice, delta);
  }
}

std::vector<InsightRow> relevance_pick(const Cube& cube, std::string_view metric, const TimeBucket& a,
                                       const TimeBucket& b, std::span<const Slice> candidates, double theta) {
  const MetricDef& def = resolve_metric(cube, metric);
  auto delta_of = [&](const Slice& s) -> std::optional<double> {
    auto va = value_or_floor(cube, def, a, s);
    auto vb = value_or_floor(cube, def, b, s);
    if (!va || !vb) return std::nullopt;
    return vb->midpoint() - va->midpoint();
  };

  SliceMap<double> tracked;
  for (const TimeBucket& t : {a, b}) {
    for (const Slice& s : tracked_slices(cube, def, t)) {
      if (tracked.contains(s)) continue;
      if (auto d = delta_of(s)) tracked.emplace(s, *d);
    }
  }

  std::vector<InsightRow> rows;
  for (const Slice& s : candidates) {
    auto d = delta_of(s);
    if (!d) continue;
    InsightRow row;
    row.slice = s;
    try {
      row.actual = def.base() ? slice_value(cube, metric, b, s) : composite_value(cube, def, b, s);
    } catch (const DivisionUndefined&) {
      row.actual.reset();
    }
    row.expected = value_or_floor(cube, def, a, s)->midpoint();
    row.impact = *d;
    rows.push_back(std::move(row));
  }
  assign_roles(rows, tracked, theta);
  return rows;
}

std::vector<InsightRow> drivers(const Cube& cube, std::string_view metric, const TimeBucket& bucket,
                                const Counterfactual& cf, size_t k, double theta, double z_star) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  const MetricDef& def = resolve_metric(cube, metric);
  const bool ratio = def.kind == MetricKind::kAverage || def.kind == MetricKind::kRatio;
  const bool use_model = cf.kind == Counterfactual::Kind::kModel;

  struct Point {
    double value = 0;
    std::optional<double> sigma;
    bool low_confidence = false;
  };
  // Counterfactual for one base metric and slice; nullopt without history.
  auto counterfactual = [&](const MetricDef& base, const Slice& s) -> std::optional<Point> {
    if (use_model) {
      auto e = expect_for(cube, base, s, bucket, cf.model);
      if (!e) return std::nullopt;
      return Point{e->prediction, e->sigma, false};
    }
    const CubeSegment& seg = require_segment(cube, base.id, cf.baseline);
    if (s.empty()) return Point{seg.total, std::nullopt, false};
    if (const SegmentEntry* e = seg.find(s)) return Point{e->value.midpoint(), std::nullopt, false};
    return Point{seg.pruned_max / 2, std::nullopt, seg.pruned_max > 0};
  };
  auto mid_or_floor = [&](const MetricDef& base, const Slice& s) {
    return value_or_floor(cube, base, bucket, s)->midpoint();
  };

  std::vector<MetricId> parts = def.base() ? std::vector<MetricId>{def.id} : def.operands;
  double top_num = 0, top_den = 0;
  if (ratio) {
    top_num = require_segment(cube, parts[0], bucket).total;
    top_den = require_segment(cube, parts[1], bucket).total;
    if (top_den == 0) return {};
  }

  // A slice that vanished since the baseline bucket is a candidate too.
  std::vector<Slice> candidates = tracked_slices(cube, def, bucket);
  if (!use_model) {
    std::vector<Slice> before = tracked_slices(cube, def, cf.baseline);
    std::vector<Slice> merged;
    std::set_union(candidates.begin(), candidates.end(), before.begin(), before.end(), std::back_inserter(merged));
    candidates = std::move(merged);
  }

  std::vector<InsightRow> rows;
  for (const Slice& s : candidates) {
    if (s.empty()) continue;
    InsightRow row;
    row.slice = s;
    try {
      row.actual = def.base() ? value_or_floor(cube, def, bucket, s) : composite_value(cube, def, bucket, s);
    } catch (const DivisionUndefined&) {
      row.actual.reset();
    }
    std::vector<Point> cfs;
    bool resolvable = true;
    for (MetricId p : parts) {
      auto c = counterfactual(cube.metrics.at(p), s);
      if (!c) {
        resolvable = false;
        break;
      }
      row.low_confidence = row.low_confidence || c->low_confidence;
      cfs.push_back(*c);
    }
    if (!resolvable) continue;

    if (ratio) {
      const double n_s = mid_or_floor(cube.metrics.at(parts[0]), s);
      const double d_s = mid_or_floor(cube.metrics.at(parts[1]), s);
      const double den = top_den - d_s + cfs[1].value;
      if (den <= 0) continue;
      const double r_cf = (top_num - n_s + cfs[0].value) / den;
      row.expected = r_cf;
      row.impact = top_num / top_den - r_cf;
    } else if (def.base()) {
      row.expected = cfs[0].value;
      row.impact = mid_or_floor(def, s) - cfs[0].value;
      row.sigma = cfs[0].sigma;
    } else {
      const double actual = mid_or_floor(cube.metrics.at(parts[0]), s) - mid_or_floor(cube.metrics.at(parts[1]), s);
      row.expected = cfs[0].value - cfs[1].value;
      row.impact = actual - *row.expected;
    }
    if (row.sigma) {
      const Significance sig = significance(row.impact, *row.sigma, z_star);
      row.z = sig.z;
      row.verdict = sig.significant ? Verdict::kAnomalous : Verdict::kNormal;
    }
    rows.push_back(std::move(row));
  }

  SliceMap<double> impacts;
  for (const InsightRow& r : rows) impacts.emplace(r.slice, r.impact);
  assign_roles(rows, impacts, theta);

  const SliceFormatter fmt = cube.formatter();
  std::vector<std::pair<std::string, InsightRow>> kept;
  for (InsightRow& r : rows) {
    if (r.role == Role::kDriver) kept.emplace_back(fmt.render(r.slice), std::move(r));
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    const double ma = std::abs(a.second.impact), mb = std::abs(b.second.impact);
    if (ma != mb) return ma > mb;
    return a.first < b.first;
  });
  std::vector<InsightRow> out;
  for (size_t i = 0; i < kept.size() && i < k; ++i) out.push_back(std::move(kept[i].second));
  return out;
}

}  // namespace trace
