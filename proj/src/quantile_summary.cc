#include "trace/quantile_summary.h"

#include <algorithm>
#include <cmath>

#include "trace/bytes.h"
#include "trace/errors.h"
#include "trace/hash.h"

namespace trace {

namespace {
constexpr double kShrink = 2.0 / 3.0;
}

QuantileSummary::QuantileSummary(uint32_t k) : k_(k), rng_state_(kHashSeed), levels_(1) {
  if (k < 8) throw InvalidArgument("quantile summary size k must be at least 8");
}

size_t QuantileSummary::level_capacity(size_t level) const {
  const size_t depth = levels_.size() - 1 - level;
  const double cap = std::ceil(double(k_) * std::pow(kShrink, double(depth)));
  return std::max<size_t>(2, static_cast<size_t>(cap));
}

size_t QuantileSummary::total_capacity() const {
  size_t total = 0;
  for (size_t h = 0; h < levels_.size(); ++h) total += level_capacity(h);
  return total;
}

size_t QuantileSummary::retained() const {
  size_t n = 0;
  for (const auto& level : levels_) n += level.size();
  return n;
}

bool QuantileSummary::next_coin() {
  rng_state_ += 0x9E3779B97F4A7C15ULL;
  return mix64(rng_state_) & 1;
}

void QuantileSummary::update(double value) {
  levels_[0].push_back(value);
  ++count_;
  if (retained() >= total_capacity()) compress();
}

void QuantileSummary::compress() {
  size_t h = 0;
  while (h < levels_.size() && levels_[h].size() < level_capacity(h)) ++h;
  if (h == levels_.size()) return;
  if (h + 1 == levels_.size()) levels_.emplace_back();

  auto& level = levels_[h];
  std::sort(level.begin(), level.end());
  // An odd item stays behind so total weight is preserved exactly.
  std::vector<double> leftover;
  if (level.size() % 2 == 1) {
    leftover.push_back(level.back());
    level.pop_back();
  }
  auto& above = levels_[h + 1];
  for (size_t i = next_coin() ? 1 : 0; i < level.size(); i += 2) above.push_back(level[i]);
  level = std::move(leftover);
}

double QuantileSummary::query(double q) const {
  if (count_ == 0) throw EmptySummary("quantile query on empty summary");
  if (!(q >= 0 && q <= 1)) throw InvalidArgument("quantile rank must lie in [0, 1]");
  std::vector<std::pair<double, uint64_t>> weighted;
  weighted.reserve(retained());
  for (size_t h = 0; h < levels_.size(); ++h) {
    for (double v : levels_[h]) weighted.emplace_back(v, uint64_t(1) << h);
  }
  std::sort(weighted.begin(), weighted.end());
  const double target = q * double(count_);
  uint64_t cumulative = 0;
  for (const auto& [v, w] : weighted) {
    cumulative += w;
    if (double(cumulative) >= target) return v;
  }
  return weighted.back().first;
}

void QuantileSummary::merge_in(const QuantileSummary& other) {
  k_ = std::min(k_, other.k_);
  if (levels_.size() < other.levels_.size()) levels_.resize(other.levels_.size());
  for (size_t h = 0; h < other.levels_.size(); ++h) {
    levels_[h].insert(levels_[h].end(), other.levels_[h].begin(), other.levels_[h].end());
  }
  count_ += other.count_;
  while (retained() > total_capacity()) compress();
}

QuantileSummary QuantileSummary::merge(const QuantileSummary& a, const QuantileSummary& b) {
  QuantileSummary out = a;
  out.merge_in(b);
  return out;
}

void QuantileSummary::serialize(std::string& out) const {
  bytes::put<uint32_t>(out, k_);
  bytes::put<uint64_t>(out, count_);
  bytes::put<uint64_t>(out, rng_state_);
  bytes::put<uint32_t>(out, static_cast<uint32_t>(levels_.size()));
  for (const auto& level : levels_) {
    bytes::put<uint32_t>(out, static_cast<uint32_t>(level.size()));
    for (double v : level) bytes::put<double>(out, v);
  }
}

QuantileSummary QuantileSummary::deserialize(std::string_view& in) {
  QuantileSummary out(bytes::get<uint32_t>(in));
  out.count_ = bytes::get<uint64_t>(in);
  out.rng_state_ = bytes::get<uint64_t>(in);
  const auto num_levels = bytes::get<uint32_t>(in);
  if (num_levels == 0 || num_levels > 64) throw FormatError("quantile summary level count out of range");
  out.levels_.assign(num_levels, {});
  uint64_t weight = 0;
  for (uint32_t h = 0; h < num_levels; ++h) {
    const auto n = bytes::get<uint32_t>(in);
    if (n > in.size() / sizeof(double)) throw bytes::Truncated();
    out.levels_[h].reserve(n);
    for (uint32_t i = 0; i < n; ++i) out.levels_[h].push_back(bytes::get<double>(in));
    weight += uint64_t(n) << h;
  }
  if (weight != out.count_) throw FormatError("quantile summary weight does not match count");
  return out;
}

}  // namespace trace
