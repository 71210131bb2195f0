#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <boost/container/small_vector.hpp>

namespace trace {

using AttributeId = uint32_t;
using ValueId = uint32_t;

// Marks a missing attribute value in a record. NULLs never produce slice pairs.
inline constexpr ValueId kNullValue = UINT32_MAX;

struct SlicePair {
  AttributeId attr = 0;
  ValueId value = 0;

  friend bool operator==(const SlicePair&, const SlicePair&) = default;
  friend auto operator<=>(const SlicePair&, const SlicePair&) = default;
};

// A conjunction of attribute=value conditions, stored strictly ascending by
// attribute id. The default-constructed slice is the top level [].
class Slice {
 public:
  using Pairs = boost::container::small_vector<SlicePair, 4>;

  Slice() = default;

  // Sorts, collapses identical duplicates, and throws ConflictingAttribute
  // when one attribute carries two different values.
  static Slice canonicalize(std::span<const SlicePair> pairs);
  static Slice canonicalize(std::initializer_list<SlicePair> pairs) {
    return canonicalize(std::span<const SlicePair>(pairs.begin(), pairs.size()));
  }

  size_t depth() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  std::span<const SlicePair> pairs() const { return {pairs_.data(), pairs_.size()}; }
  const SlicePair& operator[](size_t i) const { return pairs_[i]; }
  auto begin() const { return pairs_.begin(); }
  auto end() const { return pairs_.end(); }

  bool has_attribute(AttributeId attr) const;
  std::optional<ValueId> value_of(AttributeId attr) const;

  // Copy with pair `index` removed.
  Slice without(size_t index) const;
  // Copy with `pair` added; its attribute must be absent from this slice.
  Slice with(SlicePair pair) const;

  // Appends a pair whose attribute is greater than every attribute present.
  void push_back_ordered(SlicePair pair) { pairs_.push_back(pair); }
  void pop_back() { pairs_.pop_back(); }

  uint64_t hash() const;

  friend bool operator==(const Slice& a, const Slice& b) { return a.pairs_ == b.pairs_; }
  // Id order, not text order; see SliceFormatter for the canonical text order.
  friend bool operator<(const Slice& a, const Slice& b) { return a.pairs_ < b.pairs_; }

 private:
  Pairs pairs_;
};

struct SliceHash {
  size_t operator()(const Slice& s) const { return static_cast<size_t>(s.hash()); }
};

template <typename V>
using SliceMap = absl::flat_hash_map<Slice, V, SliceHash>;

// Bijection between text and dense ids starting at 0.
class Dictionary {
 public:
  uint32_t intern(std::string_view text);
  std::optional<uint32_t> find(std::string_view text) const;
  const std::string& text(uint32_t id) const;
  size_t size() const { return texts_.size(); }
  const std::vector<std::string>& texts() const { return texts_; }

  static Dictionary from_texts(std::vector<std::string> texts);

  friend bool operator==(const Dictionary& a, const Dictionary& b) { return a.texts_ == b.texts_; }

 private:
  std::vector<std::string> texts_;
  absl::flat_hash_map<std::string, uint32_t> ids_;
};

// Attribute names plus one value dictionary per attribute.
struct Dictionaries {
  Dictionary attributes;
  std::vector<Dictionary> values;

  AttributeId add_attribute(std::string_view name);

  friend bool operator==(const Dictionaries&, const Dictionaries&) = default;
};

// Renders and parses the canonical text form `[attr=value, attr=value]`,
// pairs ordered by attribute name. Backslash escapes `\ , = [ ]` inside names
// and values.
class SliceFormatter {
 public:
  explicit SliceFormatter(const Dictionaries& dicts) : dicts_(&dicts) {}

  std::string render(const Slice& s) const;
  // Throws UnknownSlice for names or values absent from the dictionaries and
  // InvalidArgument for malformed text.
  Slice parse(std::string_view text) const;
  bool text_less(const Slice& a, const Slice& b) const { return render(a) < render(b); }

 private:
  const Dictionaries* dicts_;
};

// Functional dependencies between attributes. Holds the reduced edge list and
// its transitive closure; slice enumeration consults the closure.
class FDGraph {
 public:
  FDGraph() = default;
  FDGraph(size_t num_attributes, std::vector<std::pair<AttributeId, AttributeId>> edges);

  const std::vector<std::pair<AttributeId, AttributeId>>& edges() const { return edges_; }
  bool empty() const { return edges_.empty(); }
  bool determines(AttributeId a, AttributeId b) const;
  // True when either attribute determines the other.
  bool redundant_pair(AttributeId a, AttributeId b) const {
    return determines(a, b) || determines(b, a);
  }

  friend bool operator==(const FDGraph& a, const FDGraph& b) { return a.edges_ == b.edges_; }

 private:
  size_t n_ = 0;
  std::vector<std::pair<AttributeId, AttributeId>> edges_;
  std::vector<bool> closure_;
};

// Drops edges implied by longer paths. Input must be acyclic.
std::vector<std::pair<AttributeId, AttributeId>> transitive_reduction(
    size_t num_attributes, const std::vector<std::pair<AttributeId, AttributeId>>& edges);

Slice canonicalize_slice(std::span<const SlicePair> pairs);

// All slices obtained by dropping one pair. The top-level slice has no
// parents and yields an empty list.
std::vector<Slice> parents_of(const Slice& s);

// Strict subset test on pairs.
bool is_ancestor(const Slice& a, const Slice& b);

namespace detail {

template <typename Visit>
void visit_slices(std::span<const ValueId> attrs, unsigned max_depth, const FDGraph& fds,
                  AttributeId next, Slice& current, Visit& visit) {
  visit(static_cast<const Slice&>(current));
  if (current.depth() >= max_depth) return;
  for (AttributeId a = next; a < attrs.size(); ++a) {
    if (attrs[a] == kNullValue) continue;
    bool redundant = false;
    if (!fds.empty()) {
      for (const SlicePair& p : current) {
        if (fds.redundant_pair(p.attr, a)) {
          redundant = true;
          break;
        }
      }
    }
    if (redundant) continue;
    current.push_back_ordered({a, attrs[a]});
    visit_slices(attrs, max_depth, fds, a + 1, current, visit);
    current.pop_back();
  }
}

}  // namespace detail

// Visits every slice of depth 0..max_depth built from the record's non-NULL
// attributes, skipping any slice that pairs attributes related by an FD.
// `attrs` is indexed by AttributeId. Slices arrive depth-first in id order.
template <typename Visit>
void for_each_slice(std::span<const ValueId> attrs, unsigned max_depth, const FDGraph& fds,
                    Visit&& visit) {
  Slice current;
  detail::visit_slices(attrs, max_depth, fds, 0, current, visit);
}

std::vector<Slice> enumerate_slices(std::span<const ValueId> attrs, unsigned max_depth,
                                    const FDGraph& fds);

}  // namespace trace
