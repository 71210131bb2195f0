#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support/oracle.h"
#include "trace/errors.h"
#include "trace/model.h"

namespace trace {
namespace {

Slice S(std::initializer_list<SlicePair> pairs) { return Slice::canonicalize(pairs); }

uint64_t binomial(unsigned n, unsigned k) {
  if (k > n) return 0;
  uint64_t r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

TEST(Canonicalize, SortsByAttribute) {
  const Slice s = S({{2, 7}, {0, 3}});
  ASSERT_EQ(s.depth(), 2u);
  EXPECT_EQ(s[0], (SlicePair{0, 3}));
  EXPECT_EQ(s[1], (SlicePair{2, 7}));
}

TEST(Canonicalize, EmptyIsTopLevel) {
  const Slice s = S({});
  EXPECT_TRUE(s.empty());
  EXPECT_EQ(s, Slice());
}

TEST(Canonicalize, ConflictingValuesThrow) {
  EXPECT_THROW(S({{1, 4}, {1, 5}}), ConflictingAttribute);
}

TEST(Canonicalize, CollapsesIdenticalDuplicates) {
  EXPECT_EQ(S({{1, 4}, {1, 4}, {0, 2}}), S({{0, 2}, {1, 4}}));
}

TEST(Canonicalize, Idempotent) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SlicePair> pairs;
    std::vector<AttributeId> attrs = {0, 1, 2, 3, 4, 5};
    std::shuffle(attrs.begin(), attrs.end(), rng);
    for (size_t i = 0; i < rng() % 6; ++i) pairs.push_back({attrs[i], static_cast<ValueId>(rng() % 9)});
    const Slice once = Slice::canonicalize(pairs);
    EXPECT_EQ(Slice::canonicalize(once.pairs()), once);
  }
}

TEST(Parents, DepthTwo) {
  const auto parents = parents_of(S({{0, 1}, {1, 2}}));
  ASSERT_EQ(parents.size(), 2u);
  EXPECT_NE(std::find(parents.begin(), parents.end(), S({{0, 1}})), parents.end());
  EXPECT_NE(std::find(parents.begin(), parents.end(), S({{1, 2}})), parents.end());
}

TEST(Parents, DepthOneHasTopLevelParent) {
  const auto parents = parents_of(S({{0, 1}}));
  ASSERT_EQ(parents.size(), 1u);
  EXPECT_TRUE(parents[0].empty());
}

TEST(Parents, DepthThreeGivesThreeDepthTwo) {
  const auto parents = parents_of(S({{0, 1}, {1, 2}, {2, 3}}));
  ASSERT_EQ(parents.size(), 3u);
  for (const Slice& p : parents) EXPECT_EQ(p.depth(), 2u);
}

TEST(Parents, TopLevelHasNone) { EXPECT_TRUE(parents_of(Slice()).empty()); }

TEST(Ancestor, Cases) {
  EXPECT_TRUE(is_ancestor(Slice(), S({{0, 1}})));
  EXPECT_FALSE(is_ancestor(S({{0, 1}}), S({{0, 1}})));
  EXPECT_TRUE(is_ancestor(S({{0, 1}}), S({{0, 1}, {1, 2}})));
  EXPECT_FALSE(is_ancestor(S({{0, 2}}), S({{0, 1}, {1, 2}})));
  EXPECT_FALSE(is_ancestor(S({{0, 1}, {1, 2}}), S({{0, 1}})));
}

TEST(Ancestor, AgreesWithParents) {
  const Slice s = S({{0, 1}, {2, 5}, {3, 4}});
  const std::vector<Slice> candidates = {Slice(),          S({{0, 1}}),         S({{2, 5}}),
                                         S({{0, 1}, {2, 5}}), S({{0, 1}, {3, 4}}), S({{2, 5}, {3, 4}}),
                                         S({{0, 2}, {2, 5}})};
  const auto parents = parents_of(s);
  for (const Slice& c : candidates) {
    const bool is_parent = std::find(parents.begin(), parents.end(), c) != parents.end();
    EXPECT_EQ(is_parent, is_ancestor(c, s) && c.depth() + 1 == s.depth());
  }
}

TEST(Enumerate, ThreeAttrsDepthTwo) {
  const std::vector<ValueId> attrs = {4, 5, 6};
  EXPECT_EQ(enumerate_slices(attrs, 2, FDGraph()).size(), 7u);
}

TEST(Enumerate, TenAttrsDepthThreeMatchesBinomialSum) {
  const std::vector<ValueId> attrs(10, 1);
  const uint64_t expected = binomial(10, 0) + binomial(10, 1) + binomial(10, 2) + binomial(10, 3);
  EXPECT_EQ(enumerate_slices(attrs, 3, FDGraph()).size(), expected);
  EXPECT_EQ(expected, 176u);
}

TEST(Enumerate, MatchesCombinationOracle) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t d = 1 + rng() % 7;
    std::vector<ValueId> attrs(d);
    for (auto& v : attrs) v = rng() % 4 == 0 ? kNullValue : rng() % 5;
    const unsigned depth = 1 + rng() % 4;
    std::vector<testing::Key> got;
    for (const Slice& s : enumerate_slices(attrs, depth, FDGraph())) got.push_back(testing::key_of(s));
    std::vector<testing::Key> want = testing::subsets(attrs, depth);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(got, want);
  }
}

TEST(Enumerate, NullsProduceNoPairs) {
  const std::vector<ValueId> attrs = {3, kNullValue, 2};
  const auto slices = enumerate_slices(attrs, 3, FDGraph());
  EXPECT_EQ(slices.size(), 4u);
  for (const Slice& s : slices) EXPECT_FALSE(s.has_attribute(1));
}

TEST(Enumerate, FunctionalDependencyDropsRedundantPair) {
  // City (0) -> Country (1).
  const FDGraph fds(2, {{0, 1}});
  const std::vector<ValueId> attrs = {0, 0};
  const auto slices = enumerate_slices(attrs, 2, fds);
  ASSERT_EQ(slices.size(), 3u);
  for (const Slice& s : slices) EXPECT_LE(s.depth(), 1u);
}

TEST(FDGraph, TransitiveReductionAndClosure) {
  const auto reduced = transitive_reduction(3, {{0, 1}, {1, 2}, {0, 2}});
  EXPECT_EQ(reduced, (std::vector<std::pair<AttributeId, AttributeId>>{{0, 1}, {1, 2}}));
  const FDGraph g(3, reduced);
  EXPECT_TRUE(g.determines(0, 2));
  EXPECT_FALSE(g.determines(2, 0));
  EXPECT_TRUE(g.redundant_pair(2, 0));
}

TEST(Dictionary, InternIsStableBijection) {
  Dictionary d;
  EXPECT_EQ(d.intern("CA"), 0u);
  EXPECT_EQ(d.intern("NY"), 1u);
  EXPECT_EQ(d.intern("CA"), 0u);
  EXPECT_EQ(d.text(1), "NY");
  EXPECT_EQ(d.find("TX"), std::nullopt);
  EXPECT_EQ(Dictionary::from_texts({"CA", "NY"}), d);
}

class FormatterTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dicts.add_attribute("state");
    dicts.add_attribute("device");
    dicts.values[0].intern("CA");
    dicts.values[1].intern("ios");
    dicts.values[1].intern("a,b=[c]");
  }
  Dictionaries dicts;
};

TEST_F(FormatterTest, RendersSortedByName) {
  const SliceFormatter fmt(dicts);
  EXPECT_EQ(fmt.render(Slice()), "[]");
  EXPECT_EQ(fmt.render(S({{0, 0}, {1, 0}})), "[device=ios, state=CA]");
}

TEST_F(FormatterTest, RoundTripsEscapes) {
  const SliceFormatter fmt(dicts);
  const Slice s = S({{1, 1}});
  const std::string text = fmt.render(s);
  EXPECT_EQ(text, "[device=a\\,b\\=\\[c\\]]");
  EXPECT_EQ(fmt.parse(text), s);
  EXPECT_EQ(fmt.parse("[ state=CA , device=ios ]"), S({{0, 0}, {1, 0}}));
}

TEST_F(FormatterTest, ParseErrors) {
  const SliceFormatter fmt(dicts);
  EXPECT_THROW(fmt.parse("[state=TX]"), UnknownSlice);
  EXPECT_THROW(fmt.parse("[planet=earth]"), UnknownSlice);
  EXPECT_THROW(fmt.parse("state=CA"), InvalidArgument);
  EXPECT_THROW(fmt.parse("[state]"), InvalidArgument);
}

}  // namespace
}  // namespace trace
