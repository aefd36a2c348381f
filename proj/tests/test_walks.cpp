#include <array>
#include <map>

#include "doctest.h"
#include "frogsim/error.hpp"
#include "frogsim/walks.hpp"

using namespace frogsim;

namespace {

// Pearson statistic against equal expected counts.
double chi_square(const std::vector<std::uint64_t>& counts) {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  const double e = static_cast<double>(n) / counts.size();
  double s = 0.0;
  for (auto c : counts) s += (c - e) * (c - e) / e;
  return s;
}

}  // namespace

TEST_CASE("srw_step is uniform over neighbours") {
  auto tree = make_tree(TreeKind::dary(3), 5);
  const NodeId v = tree.child(tree.root(), 1);
  SplitMix64 gen(11);
  std::map<std::uint32_t, std::uint64_t> hits;
  for (int i = 0; i < 400'000; ++i) hits[srw_step(tree, v, gen).value]++;
  REQUIRE(hits.size() == 4);
  std::vector<std::uint64_t> counts;
  for (auto& [k, c] : hits) counts.push_back(c);
  // 3 degrees of freedom; 16.27 is the 0.999 quantile.
  CHECK(chi_square(counts) < 16.27);

  SplitMix64 g2(12);
  std::map<std::uint32_t, std::uint64_t> plus;
  for (int i = 0; i < 300'000; ++i) plus[srw_step_plus(tree, tree.root(), g2).value]++;
  REQUIRE(plus.size() == 4);
  CHECK(plus.count(kLeafVertex.value) == 1);
  counts.clear();
  for (auto& [k, c] : plus) counts.push_back(c);
  CHECK(chi_square(counts) < 16.27);
  CHECK(srw_step_plus(tree, kLeafVertex, g2) == tree.root());
}

TEST_CASE("loop erasure of hand-written sequences") {
  CHECK(loop_erase<int>({1, 2, 3, 2, 4, 1, 5}) == std::vector<int>{1, 5});
  CHECK(loop_erase<int>({1, 2, 3, 4}) == std::vector<int>{1, 2, 3, 4});
  CHECK(loop_erase<int>({7, 7, 7}) == std::vector<int>{7});
  CHECK(loop_erase<int>({1, 2, 1, 3, 4, 3, 5}) == std::vector<int>{1, 3, 5});
}

TEST_CASE("tree eraser agrees with generic erasure on random walks") {
  auto tree = make_tree(TreeKind::dary(2), 3);
  SplitMix64 gen(99);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<NodeId> raw{tree.child(tree.root(), 0)};
    TreeLoopEraser er(raw.front());
    for (int s = 0; s < 200; ++s) {
      const NodeId next = srw_step(tree, raw.back(), gen);
      raw.push_back(next);
      er.step(next);
    }
    CHECK(er.path() == loop_erase<NodeId, NodeIdHash>(raw));
  }
}

TEST_CASE("hitting the root from a child") {
  // h = 1/(1 + d - d h) has smaller root 1/d for the d-ary tree, so a walk
  // from depth k reaches the root with probability d^-k.
  struct Case {
    std::uint32_t d;
    std::uint32_t depth;
    double exact;
  };
  for (const Case c : {Case{2, 1, 0.5}, Case{4, 1, 0.25}, Case{2, 2, 0.25}}) {
    auto tree = make_tree(TreeKind::dary(c.d), 1);
    NodeId start = tree.root();
    for (std::uint32_t i = 0; i < c.depth; ++i) start = tree.child(start, 0);
    SplitMix64 gen(1000 + c.d);
    const int n = 100'000;
    int hit = 0;
    for (int i = 0; i < n; ++i) {
      std::vector<NodeId> raw;
      const auto out = lerw_to_root_or_escape(tree, start, gen, {40, kDefaultStepBudget}, &raw);
      if (out.tag == LerwTag::kHitRoot) {
        ++hit;
        CHECK(out.path.back() == tree.root());
      }
      CHECK(out.path == loop_erase<NodeId, NodeIdHash>(raw));
    }
    const double se = std::sqrt(c.exact * (1 - c.exact) / n);
    CHECK(std::abs(hit / double(n) - c.exact) < 5 * se);
  }
}

TEST_CASE("root frog returns with probability 1/2 on the binary tree") {
  auto tree = make_tree(TreeKind::dary(2), 1);
  SplitMix64 gen(8);
  const int n = 100'000;
  int hit = 0;
  for (int i = 0; i < n; ++i) {
    const auto out = root_frog_lerw(tree, gen, {40, kDefaultStepBudget});
    CHECK(out.path.front() == tree.root());
    if (out.tag == LerwTag::kHitRoot) {
      ++hit;
      CHECK(out.path.size() == 3);
      CHECK(out.path.back() == tree.root());
    }
  }
  CHECK(std::abs(hit / double(n) - 0.5) < 5 * std::sqrt(0.25 / n));
}

TEST_CASE("leaf kill probability from the root is p/(1+p) on the binary tree") {
  auto tree = make_tree(TreeKind::dary(2), 1);
  for (double p : {0.5, 0.8}) {
    SplitMix64 gen(static_cast<std::uint64_t>(p * 100));
    const int n = 100'000;
    int killed = 0;
    for (int i = 0; i < n; ++i) {
      const auto out = walk_with_leaf_kill(tree, tree.root(), p, gen, {40, kDefaultStepBudget});
      if (out.killed_at_leaf) {
        ++killed;
        CHECK(out.tag == LerwTag::kHitRoot);
        CHECK(out.path.back() == tree.root());
      }
    }
    const double q = p / (1 + p);
    CHECK(std::abs(killed / double(n) - q) < 5 * std::sqrt(q * (1 - q) / n));
  }
}

TEST_CASE("walk preconditions") {
  auto tree = make_tree(TreeKind::dary(2), 1);
  SplitMix64 gen(1);
  CHECK_THROWS_AS(lerw_to_root_or_escape(tree, tree.root(), gen), PreconditionError);
  CHECK_THROWS_AS(walk_with_leaf_kill(tree, tree.root(), 1.5, gen), PreconditionError);
  const auto out = lerw_to_root_or_escape(tree, tree.child(tree.root(), 0), gen, {60, 3});
  CHECK(out.steps_consumed <= 3);
}
