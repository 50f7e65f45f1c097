#include <gtest/gtest.h>

#include <map>
#include <set>

#include "test_support.hpp"
#include "tssb/measure.hpp"
#include "tssb/node_path.hpp"
#include "tssb/tree_state.hpp"

using namespace tssb;

TEST(NodePath, LexCompareExamples) {
  EXPECT_EQ(lex_compare(NodePath{}, NodePath{1}), std::strong_ordering::less);
  EXPECT_EQ(lex_compare(NodePath{1, 2}, NodePath{1, 2}), std::strong_ordering::equal);
  EXPECT_EQ(lex_compare(NodePath{1, 3}, NodePath{2, 1}), std::strong_ordering::less);
  EXPECT_EQ(lex_compare(NodePath{2}, NodePath{1, 5}), std::strong_ordering::greater);
}

TEST(NodePath, DepthPrefixAndAncestry) {
  NodePath p{2, 1, 3};
  EXPECT_EQ(p.depth(), 3u);
  EXPECT_EQ(NodePath::root().depth(), 0u);
  EXPECT_EQ(p.parent(), (NodePath{2, 1}));
  EXPECT_TRUE(NodePath({2}).is_ancestor_of(p));
  EXPECT_TRUE(NodePath::root().is_ancestor_of(p));
  EXPECT_FALSE(p.is_ancestor_of(p));
  EXPECT_TRUE(p.is_ancestor_or_self_of(p));
  EXPECT_FALSE(NodePath({2, 2}).is_ancestor_of(p));
  EXPECT_THROW(NodePath({0}), invariant_error);
}

TEST(NodePath, StringFormRoundTrip) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    NodePath p = test::random_path(rng, 6, 12);
    EXPECT_EQ(NodePath::parse(p.to_string()), p);
  }
  EXPECT_EQ(NodePath::parse(""), NodePath::root());
  EXPECT_THROW(NodePath::parse("1..2"), data_error);
  EXPECT_THROW(NodePath::parse("1.0"), data_error);
  EXPECT_THROW(NodePath::parse("a"), data_error);
}

TEST(NodePath, LexCompareIsATotalOrder) {
  Rng rng(11);
  for (int t = 0; t < 5000; ++t) {
    NodePath a = test::random_path(rng), b = test::random_path(rng), c = test::random_path(rng);
    auto ab = lex_compare(a, b), ba = lex_compare(b, a);
    // antisymmetry
    EXPECT_EQ(ab == std::strong_ordering::less, ba == std::strong_ordering::greater);
    EXPECT_EQ(ab == std::strong_ordering::equal, a == b);
    // transitivity
    if (ab != std::strong_ordering::greater && lex_compare(b, c) != std::strong_ordering::greater) {
      EXPECT_NE(lex_compare(a, c), std::strong_ordering::greater);
    }
    // strict prefixes come first
    if (a.is_ancestor_of(b)) {
      EXPECT_EQ(ab, std::strong_ordering::less);
    }
  }
}

namespace {

// A hand-built tree: root with children 1 and 2, node 1 with child 1.2.
TreeState small_tree(std::size_t n_data) {
  TreeState s(n_data);
  NodeRecord root;
  root.nu = 0.5;
  root.psi = {0.5, 0.5};
  s.insert(NodePath::root(), root);
  NodeRecord one;
  one.nu = 0.5;
  one.psi = {0.5, 0.5};
  s.insert(NodePath{1}, one);
  s.insert(NodePath{2}, NodeRecord{});
  s.insert(NodePath{1, 2}, NodeRecord{});
  return s;
}

void expect_counts_match_recount(const TreeState& s) {
  auto rc = s.recount();
  for (const auto& [p, rec] : s.nodes()) {
    auto it = rc.find(p);
    std::int64_t h = it == rc.end() ? 0 : it->second.first;
    std::int64_t b = it == rc.end() ? 0 : it->second.second;
    EXPECT_EQ(rec.n_here, h) << p.to_string();
    EXPECT_EQ(rec.n_below, b) << p.to_string();
  }
}

}  // namespace

TEST(UpdateCounts, FirstDatumAtRoot) {
  TreeState s = small_tree(1);
  s.update_counts(0, NodePath::root());
  EXPECT_EQ(s.at(NodePath::root()).n_here, 1);
  for (const auto& [p, rec] : s.nodes()) EXPECT_EQ(rec.n_below, 0);
}

TEST(UpdateCounts, MoveDownOneLevel) {
  TreeState s = small_tree(2);
  s.update_counts(0, NodePath{1});
  s.update_counts(1, NodePath{2});
  auto before_root_below = s.at(NodePath::root()).n_below;
  s.update_counts(0, NodePath{1, 2});
  EXPECT_EQ(s.at(NodePath{1}).n_here, 0);
  EXPECT_EQ(s.at(NodePath{1}).n_below, 1);
  EXPECT_EQ(s.at(NodePath{1, 2}).n_here, 1);
  EXPECT_EQ(s.at(NodePath::root()).n_below, before_root_below);
  expect_counts_match_recount(s);
}

TEST(UpdateCounts, IncrementalMatchesRecountOnRandomAssignments) {
  Rng rng(7);
  Hyperparams hp{2.0, 0.8, 1.5, {}};
  static const NullKernel kernel;
  auto prior = make_prior(hp, kernel);
  TreeState s(50);
  ensure_root(s, prior, rng);
  for (int round = 0; round < 20; ++round) {
    for (std::size_t n = 0; n < 50; ++n) s.update_counts(n, find_node(s, rng.uniform(), prior, rng));
    expect_counts_match_recount(s);
    EXPECT_TRUE(s.counts_consistent());
    for (const auto& [p, rec] : s.nodes()) {
      std::int64_t below = 0;
      for (const auto& c : s.children(p)) below += s.at(c).subtree_total();
      EXPECT_EQ(rec.n_below, below);
    }
    s.garbage_collect();
    EXPECT_TRUE(s.counts_consistent());
  }
}

TEST(UpdateCounts, RejectsMissingPathAndUnderflow) {
  TreeState s = small_tree(1);
  EXPECT_THROW(s.update_counts(0, NodePath{3}), invariant_error);
  EXPECT_THROW(s.update_counts(1, NodePath{1}), invariant_error);
}

TEST(GarbageCollect, AllDataAtRootLeavesOnlyRoot) {
  TreeState s = small_tree(3);
  for (std::size_t n = 0; n < 3; ++n) s.update_counts(n, NodePath::root());
  s.garbage_collect();
  EXPECT_EQ(s.node_count(), 1u);
  EXPECT_TRUE(s.at(NodePath::root()).psi.empty());
}

TEST(GarbageCollect, PrunesAbandonedBranchAndMatchesScratchHull) {
  TreeState s = small_tree(2);
  NodeRecord& two = s.at(NodePath{2});
  two.psi = {0.3};
  s.insert(NodePath{2, 1}, NodeRecord{});
  s.update_counts(0, NodePath{2, 1});
  s.update_counts(1, NodePath{1});
  s.garbage_collect();
  EXPECT_TRUE(s.contains(NodePath{2, 1}));
  s.update_counts(0, NodePath::root());
  s.garbage_collect();
  EXPECT_FALSE(s.contains(NodePath{2, 1}));
  EXPECT_FALSE(s.contains(NodePath{2}));
  EXPECT_FALSE(s.contains(NodePath{1, 2}));
  EXPECT_EQ(s.at(NodePath::root()).psi.size(), 1u);
  EXPECT_TRUE(s.at(NodePath{1}).psi.empty());

  std::set<NodePath> kept;
  for (const auto& [p, rec] : s.nodes()) kept.insert(p);
  EXPECT_EQ(kept, s.hull_nodes());
}

TEST(GarbageCollect, HullPropertiesAndIdempotence) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    Hyperparams hp{1.0 + 4.0 * rng.uniform(), 0.5 + 0.5 * rng.uniform(), 0.5 + 2.0 * rng.uniform(), {}};
    TreeState s = test::random_stick_state(hp, 30, rng, false);
    s.garbage_collect();
    std::set<NodePath> kept;
    for (const auto& [p, rec] : s.nodes()) kept.insert(p);
    EXPECT_EQ(kept, s.hull_nodes());
    // psi hull: exactly up to the last child any datum passes through
    for (const auto& [p, rec] : s.nodes()) {
      std::size_t need = 0;
      for (const auto& a : s.assignments())
        if (a && p.is_ancestor_of(*a)) need = std::max<std::size_t>(need, (*a)[p.depth()]);
      EXPECT_EQ(rec.psi.size(), need);
    }
    auto before = s.nodes().size();
    std::vector<std::vector<double>> psi_before;
    for (const auto& [p, rec] : s.nodes()) psi_before.push_back(rec.psi);
    s.garbage_collect();
    EXPECT_EQ(s.nodes().size(), before);
    std::size_t i = 0;
    for (const auto& [p, rec] : s.nodes()) EXPECT_EQ(rec.psi, psi_before[i++]);
  }
}

TEST(PermuteChildren, MovesSubtreesAndData) {
  TreeState s = small_tree(3);
  s.update_counts(0, NodePath{1, 2});
  s.update_counts(1, NodePath{2});
  s.update_counts(2, NodePath{1});
  s.permute_children(NodePath::root(), {1, 0}, {0.25, 0.75});
  EXPECT_EQ(*s.assignment(0), (NodePath{2, 2}));
  EXPECT_EQ(*s.assignment(1), (NodePath{1}));
  EXPECT_EQ(*s.assignment(2), (NodePath{2}));
  EXPECT_TRUE(s.contains(NodePath{2, 2}));
  EXPECT_FALSE(s.contains(NodePath{1, 2}));
  EXPECT_EQ(s.at(NodePath::root()).psi, (std::vector<double>{0.25, 0.75}));
  EXPECT_TRUE(s.counts_consistent());
}
