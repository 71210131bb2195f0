#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trace {

// Compactor-based (KLL) quantile summary. Level h holds items of weight 2^h;
// a full level is sorted and every other item (random offset) is promoted.
// The coin flips come from a fixed-seed generator so builds are repeatable.
class QuantileSummary {
 public:
  static constexpr uint32_t kDefaultK = 200;

  explicit QuantileSummary(uint32_t k = kDefaultK);

  void update(double value);

  // Value at normalized rank q in (0, 1). Throws EmptySummary.
  double query(double q) const;

  // Concatenates levels, then compacts.
  static QuantileSummary merge(const QuantileSummary& a, const QuantileSummary& b);
  void merge_in(const QuantileSummary& other);

  uint64_t count() const { return count_; }
  uint32_t k() const { return k_; }
  size_t retained() const;
  size_t num_levels() const { return levels_.size(); }

  void serialize(std::string& out) const;
  static QuantileSummary deserialize(std::string_view& in);

  friend bool operator==(const QuantileSummary&, const QuantileSummary&) = default;

 private:
  size_t level_capacity(size_t level) const;
  size_t total_capacity() const;
  void compress();
  bool next_coin();

  uint32_t k_;
  uint64_t count_ = 0;
  uint64_t rng_state_;
  std::vector<std::vector<double>> levels_;
};

}  // namespace trace
