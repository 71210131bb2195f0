#include "trace/model.h"

#include <algorithm>

#include "trace/errors.h"
#include "trace/hash.h"

namespace trace {

Slice Slice::canonicalize(std::span<const SlicePair> pairs) {
  Slice out;
  out.pairs_.assign(pairs.begin(), pairs.end());
  std::sort(out.pairs_.begin(), out.pairs_.end());
  out.pairs_.erase(std::unique(out.pairs_.begin(), out.pairs_.end()), out.pairs_.end());
  for (size_t i = 1; i < out.pairs_.size(); ++i) {
    if (out.pairs_[i].attr == out.pairs_[i - 1].attr) {
      throw ConflictingAttribute("attribute " + std::to_string(out.pairs_[i].attr) +
                                 " appears with two different values");
    }
  }
  return out;
}

bool Slice::has_attribute(AttributeId attr) const { return value_of(attr).has_value(); }

std::optional<ValueId> Slice::value_of(AttributeId attr) const {
  for (const SlicePair& p : pairs_) {
    if (p.attr == attr) return p.value;
    if (p.attr > attr) break;
  }
  return std::nullopt;
}

Slice Slice::without(size_t index) const {
  Slice out;
  out.pairs_.reserve(pairs_.size() - 1);
  for (size_t i = 0; i < pairs_.size(); ++i) {
    if (i != index) out.pairs_.push_back(pairs_[i]);
  }
  return out;
}

Slice Slice::with(SlicePair pair) const {
  Slice out = *this;
  auto it = std::lower_bound(out.pairs_.begin(), out.pairs_.end(), pair,
                             [](const SlicePair& a, const SlicePair& b) { return a.attr < b.attr; });
  if (it != out.pairs_.end() && it->attr == pair.attr) {
    if (it->value != pair.value) {
      throw ConflictingAttribute("attribute " + std::to_string(pair.attr) + " already present");
    }
    return out;
  }
  out.pairs_.insert(it, pair);
  return out;
}

uint64_t Slice::hash() const {
  uint64_t h = kHashSeed ^ pairs_.size();
  for (const SlicePair& p : pairs_) {
    h = mix64(h ^ ((uint64_t(p.attr) << 32) | p.value));
  }
  return h;
}

uint32_t Dictionary::intern(std::string_view text) {
  auto it = ids_.find(absl::string_view(text.data(), text.size()));
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<uint32_t>(texts_.size());
  texts_.emplace_back(text);
  ids_.emplace(texts_.back(), id);
  return id;
}

std::optional<uint32_t> Dictionary::find(std::string_view text) const {
  auto it = ids_.find(absl::string_view(text.data(), text.size()));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Dictionary::text(uint32_t id) const {
  if (id >= texts_.size()) {
    throw InvalidArgument("dictionary id " + std::to_string(id) + " out of range");
  }
  return texts_[id];
}

Dictionary Dictionary::from_texts(std::vector<std::string> texts) {
  Dictionary d;
  for (auto& t : texts) {
    if (d.find(t)) throw FormatError("duplicate dictionary entry '" + t + "'");
    d.intern(t);
  }
  return d;
}

AttributeId Dictionaries::add_attribute(std::string_view name) {
  const AttributeId id = attributes.intern(name);
  if (values.size() <= id) values.resize(id + 1);
  return id;
}

namespace {

bool needs_escape(char c) { return c == '\\' || c == ',' || c == '=' || c == '[' || c == ']'; }

void append_escaped(std::string& out, std::string_view text) {
  for (char c : text) {
    if (needs_escape(c)) out.push_back('\\');
    out.push_back(c);
  }
}

// Splits on unescaped `sep`, unescaping as it goes.
std::vector<std::string> split_unescaped(std::string_view text, char sep) {
  std::vector<std::string> parts(1);
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\') {
      if (i + 1 >= text.size()) throw InvalidArgument("dangling escape in slice text");
      parts.back().push_back(text[++i]);
    } else if (c == sep) {
      parts.emplace_back();
    } else {
      parts.back().push_back(c);
    }
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ' && !(s.size() >= 2 && s[s.size() - 2] == '\\')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

std::string SliceFormatter::render(const Slice& s) const {
  std::vector<std::pair<const std::string*, const std::string*>> named;
  named.reserve(s.depth());
  for (const SlicePair& p : s) {
    named.emplace_back(&dicts_->attributes.text(p.attr), &dicts_->values.at(p.attr).text(p.value));
  }
  std::sort(named.begin(), named.end(), [](const auto& a, const auto& b) { return *a.first < *b.first; });
  std::string out = "[";
  for (size_t i = 0; i < named.size(); ++i) {
    if (i) out += ", ";
    append_escaped(out, *named[i].first);
    out.push_back('=');
    append_escaped(out, *named[i].second);
  }
  out.push_back(']');
  return out;
}

Slice SliceFormatter::parse(std::string_view text) const {
  text = trim(text);
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') {
    throw InvalidArgument("slice text must be enclosed in brackets: '" + std::string(text) + "'");
  }
  std::string_view body = trim(text.substr(1, text.size() - 2));
  if (body.empty()) return Slice();

  // Split on unescaped commas first while keeping escapes for the '=' split.
  std::vector<std::string> terms(1);
  for (size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '\\' && i + 1 < body.size()) {
      terms.back().push_back(body[i]);
      terms.back().push_back(body[++i]);
    } else if (body[i] == ',') {
      terms.emplace_back();
    } else {
      terms.back().push_back(body[i]);
    }
  }

  std::vector<SlicePair> pairs;
  for (const std::string& raw : terms) {
    auto kv = split_unescaped(trim(raw), '=');
    if (kv.size() != 2) throw InvalidArgument("malformed slice term '" + raw + "'");
    auto attr = dicts_->attributes.find(kv[0]);
    if (!attr) throw UnknownSlice("unknown attribute '" + kv[0] + "'");
    auto value = dicts_->values.at(*attr).find(kv[1]);
    if (!value) throw UnknownSlice("unknown value '" + kv[1] + "' for attribute '" + kv[0] + "'");
    pairs.push_back({*attr, *value});
  }
  return Slice::canonicalize(pairs);
}

FDGraph::FDGraph(size_t num_attributes, std::vector<std::pair<AttributeId, AttributeId>> edges)
    : n_(num_attributes), edges_(std::move(edges)), closure_(num_attributes * num_attributes, false) {
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (auto [a, b] : edges_) {
    if (a >= n_ || b >= n_ || a == b) throw InvalidArgument("invalid FD edge");
    closure_[a * n_ + b] = true;
  }
  // Warshall.
  for (size_t k = 0; k < n_; ++k) {
    for (size_t i = 0; i < n_; ++i) {
      if (!closure_[i * n_ + k]) continue;
      for (size_t j = 0; j < n_; ++j) {
        if (closure_[k * n_ + j]) closure_[i * n_ + j] = true;
      }
    }
  }
}

bool FDGraph::determines(AttributeId a, AttributeId b) const {
  if (a >= n_ || b >= n_ || a == b) return false;
  return closure_[a * n_ + b];
}

std::vector<std::pair<AttributeId, AttributeId>> transitive_reduction(
    size_t num_attributes, const std::vector<std::pair<AttributeId, AttributeId>>& edges) {
  FDGraph full(num_attributes, edges);
  std::vector<std::pair<AttributeId, AttributeId>> reduced;
  for (auto [a, b] : full.edges()) {
    bool implied = false;
    for (AttributeId mid = 0; mid < num_attributes && !implied; ++mid) {
      if (mid == a || mid == b) continue;
      implied = full.determines(a, mid) && full.determines(mid, b);
    }
    if (!implied) reduced.emplace_back(a, b);
  }
  return reduced;
}

Slice canonicalize_slice(std::span<const SlicePair> pairs) { return Slice::canonicalize(pairs); }

std::vector<Slice> parents_of(const Slice& s) {
  std::vector<Slice> out;
  out.reserve(s.depth());
  for (size_t i = 0; i < s.depth(); ++i) out.push_back(s.without(i));
  return out;
}

bool is_ancestor(const Slice& a, const Slice& b) {
  if (a.depth() >= b.depth()) return false;
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::vector<Slice> enumerate_slices(std::span<const ValueId> attrs, unsigned max_depth,
                                    const FDGraph& fds) {
  std::vector<Slice> out;
  for_each_slice(attrs, max_depth, fds, [&](const Slice& s) { out.push_back(s); });
  return out;
}

}  // namespace trace
