#include "trace/distinct_summary.h"

#include <algorithm>
#include <cmath>

#include "trace/bytes.h"
#include "trace/errors.h"
#include "trace/hash.h"

namespace trace {

DistinctSummary::DistinctSummary(uint32_t k) : k_(k) {
  if (k < 2) throw InvalidArgument("distinct summary size k must be at least 2");
}

void DistinctSummary::update(std::string_view item) { update_hash(hash_bytes(item)); }

void DistinctSummary::update_hash(uint64_t hash) {
  if (hashes_.size() >= k_ && hash >= hashes_.back()) return;
  auto it = std::lower_bound(hashes_.begin(), hashes_.end(), hash);
  if (it != hashes_.end() && *it == hash) return;
  hashes_.insert(it, hash);
  if (hashes_.size() > k_) hashes_.pop_back();
}

double DistinctSummary::estimate() const {
  if (hashes_.size() < k_) return static_cast<double>(hashes_.size());
  // theta = k-th smallest hash as a fraction of the hash space.
  const double theta = std::ldexp(static_cast<double>(hashes_[k_ - 1]), -64);
  if (theta <= 0) return static_cast<double>(hashes_.size());
  return (k_ - 1) / theta;
}

DistinctSummary DistinctSummary::merge(const DistinctSummary& a, const DistinctSummary& b) {
  DistinctSummary out(std::min(a.k_, b.k_));
  out.hashes_.reserve(a.hashes_.size() + b.hashes_.size());
  std::set_union(a.hashes_.begin(), a.hashes_.end(), b.hashes_.begin(), b.hashes_.end(),
                 std::back_inserter(out.hashes_));
  if (out.hashes_.size() > out.k_) out.hashes_.resize(out.k_);
  return out;
}

void DistinctSummary::serialize(std::string& out) const {
  bytes::put<uint32_t>(out, k_);
  bytes::put<uint32_t>(out, static_cast<uint32_t>(hashes_.size()));
  for (uint64_t h : hashes_) bytes::put<uint64_t>(out, h);
}

DistinctSummary DistinctSummary::deserialize(std::string_view& in) {
  DistinctSummary out(bytes::get<uint32_t>(in));
  const auto n = bytes::get<uint32_t>(in);
  if (n > out.k_) throw FormatError("distinct summary holds more hashes than k");
  out.hashes_.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    const auto h = bytes::get<uint64_t>(in);
    if (!out.hashes_.empty() && h <= out.hashes_.back()) {
      throw FormatError("distinct summary hashes not strictly increasing");
    }
    out.hashes_.push_back(h);
  }
  return out;
}

}  // namespace trace
