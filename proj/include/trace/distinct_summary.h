#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trace {

// K-minimum-values distinct counter over 64-bit hashes. Exact below
// saturation; (k - 1) / theta afterwards.
class DistinctSummary {
 public:
  static constexpr uint32_t kDefaultK = 1024;

  explicit DistinctSummary(uint32_t k = kDefaultK);

  void update(std::string_view item);
  void update_hash(uint64_t hash);

  double estimate() const;

  // Union of the two hash sets, truncated to the smaller k.
  static DistinctSummary merge(const DistinctSummary& a, const DistinctSummary& b);
  void merge_in(const DistinctSummary& other) { *this = merge(*this, other); }

  uint32_t k() const { return k_; }
  const std::vector<uint64_t>& hashes() const { return hashes_; }
  bool saturated() const { return hashes_.size() >= k_; }

  void serialize(std::string& out) const;
  static DistinctSummary deserialize(std::string_view& in);

  friend bool operator==(const DistinctSummary&, const DistinctSummary&) = default;

 private:
  uint32_t k_;
  std::vector<uint64_t> hashes_;  // strictly increasing
};

}  // namespace trace
