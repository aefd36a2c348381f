#include <Eigen/Dense>

#include "doctest.h"
#include "frogsim/error.hpp"
#include "frogsim/harmonic.hpp"

using namespace frogsim;

namespace {

// Explicit graph of a finite tree: BFS order with parent/children indices.
struct Explicit {
  std::vector<NodeId> ids;
  std::vector<int> parent;
  std::vector<std::vector<int>> children;
};

Explicit explicit_tree(const TreeHandle& t) {
  Explicit e;
  e.ids.push_back(t.root());
  e.parent.push_back(-1);
  for (std::size_t i = 0; i < e.ids.size(); ++i) {
    e.children.emplace_back();
    for (std::uint32_t c = 0; c < t.child_count(e.ids[i]); ++c) {
      e.children[i].push_back(static_cast<int>(e.ids.size()));
      e.ids.push_back(t.child(e.ids[i], c));
      e.parent.push_back(static_cast<int>(i));
    }
  }
  return e;
}

// Dense solve of a harmonic function on the finite tree. `fixed[i]` pins a
// value; other vertices average over their neighbours.
Eigen::VectorXd solve_harmonic(const Explicit& e, const std::vector<std::optional<double>>& fixed) {
  const int n = static_cast<int>(e.ids.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    if (fixed[i]) {
      b(i) = *fixed[i];
      continue;
    }
    std::vector<int> nbr = e.children[i];
    if (e.parent[i] >= 0) nbr.push_back(e.parent[i]);
    for (int j : nbr) a(i, j) -= 1.0 / nbr.size();
  }
  return a.partialPivLu().solve(b);
}

bool is_leaf(const Explicit& e, int i) { return e.children[i].empty(); }

}  // namespace

TEST_CASE("d-ary closed forms") {
  for (std::uint32_t d : {2u, 3u, 5u}) {
    auto tree = make_tree(TreeKind::dary(d), 0);
    HarmonicSolver s(tree, 40);
    const NodeId c = tree.child(tree.root(), 0);
    const NodeId g = tree.child(tree.child(c, d - 1), 1);
    const auto h = s.hit_parent(c);
    CHECK(h.contains(1.0 / d));
    CHECK(h.width() < 1e-9);
    CHECK(s.hit_root(g).contains(std::pow(d, -3.0)));
    const auto harm = s.harm_vertex(g);
    CHECK(harm.contains(std::pow(d, -3.0)));
    CHECK(harm.width() < 1e-9);
  }
}

TEST_CASE("joined tree splits by escape weight") {
  for (std::uint32_t d : {3u, 50u}) {
    auto tree = make_tree(TreeKind::joined(d), 0);
    const double left = 0.5, right = 1.0 - 1.0 / d;
    const auto h = harm_child(tree, tree.root(), 0, 40);
    CHECK(h.contains(left / (left + right)));
    CHECK(h.width() < 1e-9);
  }
}

TEST_CASE("finite trees match a dense linear solve") {
  auto gw = make_tree(TreeKind::gw(OffspringDistribution::pmf({{2, 0.5}, {3, 0.5}})), 42);
  const std::uint32_t depth = 5;
  const FiniteTree ft = truncate(gw, depth);
  auto fin = make_tree(ft.to_kind(), 0);
  const Explicit e = explicit_tree(fin);
  REQUIRE(e.ids.size() == ft.size());

  // P_u(hit root before the boundary level).
  std::vector<std::optional<double>> fixed(e.ids.size());
  fixed[0] = 1.0;
  for (std::size_t i = 0; i < e.ids.size(); ++i)
    if (is_leaf(e, static_cast<int>(i))) fixed[i] = 0.0;
  const Eigen::VectorXd hit = solve_harmonic(e, fixed);
  HarmonicSolver s(fin, 12);
  for (std::size_t i = 1; i < e.ids.size(); i += 7) {
    const auto b = s.hit_root(e.ids[i]);
    CHECK(b.width() < 1e-12);
    CHECK(b.mid() == doctest::Approx(hit(i)).epsilon(1e-11));
  }

  // Harmonic measure from the root: the root reflects, the boundary absorbs.
  const FirstHit fh = first_hit_level_n(gw, depth);
  std::vector<int> boundary;
  for (std::size_t i = 0; i < e.ids.size(); ++i)
    if (is_leaf(e, static_cast<int>(i))) boundary.push_back(static_cast<int>(i));
  REQUIRE(boundary.size() == fh.f.size());
  double total = 0.0;
  for (std::size_t j = 0; j < boundary.size(); j += 5) {
    std::vector<std::optional<double>> fx(e.ids.size());
    for (int b : boundary) fx[b] = b == boundary[j] ? 1.0 : 0.0;
    const double exact = solve_harmonic(e, fx)(0);
    CHECK(fh.f[j] == doctest::Approx(exact).epsilon(1e-10));
    CHECK(s.harm_vertex(e.ids[boundary[j]]).mid() == doctest::Approx(exact).epsilon(1e-10));
  }
  for (double f : fh.f) total += f;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("brackets nest as the recursion deepens") {
  auto gw = make_tree(TreeKind::gw(OffspringDistribution::pmf({{2, 0.6}, {4, 0.4}})), 3);
  const NodeId v = gw.child(gw.child(gw.root(), 1), 0);
  SolverOptions shallow;
  shallow.relative_depth = 4;
  SolverOptions deep;
  deep.relative_depth = 9;
  const auto a = hit_parent_prob(gw, v, 40, shallow);
  const auto b = hit_parent_prob(gw, v, 40, deep);
  CHECK(a.lo <= b.lo);
  CHECK(b.hi <= a.hi);
  CHECK(b.width() < a.width());
  CHECK(b.width() < 1e-3);
}

TEST_CASE("leaf kill probability") {
  auto tree = make_tree(TreeKind::dary(2), 0);
  const auto q = leaf_kill_prob(tree, tree.root(), 0.5, 40);
  CHECK(q.contains(1.0 / 3.0));
  CHECK(q.width() < 1e-9);
  const auto q1 = leaf_kill_prob(tree, tree.child(tree.root(), 1), 0.5, 40);
  CHECK(q1.contains(1.0 / 6.0));
  CHECK_THROWS_AS(leaf_kill_prob(tree, tree.root(), 0.0, 40), PreconditionError);
}

TEST_CASE("harmonic rays follow the child split") {
  auto tree = make_tree(TreeKind::joined(5), 0);
  HarmonicSolver s(tree, 40);
  SplitMix64 gen(17);
  const int n = 40'000;
  int left = 0;
  for (int i = 0; i < n; ++i) {
    const auto ray = sample_harmonic_ray(s, 3, gen);
    REQUIRE(ray.vertices.size() == 4);
    CHECK_FALSE(ray.flagged);
    if (tree.index_in_parent(ray.vertices[1]) == 0) ++left;
  }
  const double p = 0.5 / (0.5 + 0.8);
  CHECK(std::abs(left / double(n) - p) < 5 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("lemma audits") {
  auto bin = make_tree(TreeKind::dary(2), 0);
  const auto b1 = audit_lemma_B1(bin, 4, 40);
  CHECK(b1.pass);
  CHECK(b1.instances == 16);

  auto gw = make_tree(TreeKind::gw(OffspringDistribution::pmf({{2, 0.5}, {5, 0.5}})), 8);
  CHECK(audit_lemma_B1(gw, 4, 40).pass);
  CHECK(audit_level1_harm(gw, 40).pass);

  // Dary(3), u at depth 3: P0(u) = 1/27 and HARM inside T(v) is 1/3.
  auto ter = make_tree(TreeKind::dary(3), 0);
  const NodeId u = ter.find(VertexId{{0, 1, 2}});
  const auto a1 = audit_lemma_A1(ter, u, 40);
  CHECK(a1.pass);
  CHECK(a1.details["p0_lo"].get<double>() == doctest::Approx(1.0 / 27.0).epsilon(1e-9));
  CHECK(a1.details["harm_lo"].get<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(a1.details["rhs"].get<double>() == doctest::Approx(4.0 / 81.0 / 27.0).epsilon(1e-9));

  CHECK_THROWS_AS(audit_lemma_A1(bin, bin.find(VertexId{{0, 0, 0}}), 40), PreconditionError);
  CHECK_THROWS_AS(HarmonicSolver(bin, 5), PreconditionError);
}

TEST_CASE("lemma 4.4 observable on a regular tree") {
  // Every level-n vertex of Dary(3) has 3 children, so the sum is 1 for N <= 3
  // and 0 above.
  auto ter = make_tree(TreeKind::dary(3), 0);
  CHECK(lemma_4_4_observable(ter, 3, 3, 40).value == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lemma_4_4_observable(ter, 3, 4, 40).value == 0.0);
}

TEST_CASE("Radon-Nikodym ratio of a root-degree event") {
  // Harmonic choice of v_1 tilts toward wide subtrees, but only boundedly.
  const auto law = OffspringDistribution::pmf({{2, 0.5}, {3, 0.5}});
  TreePredicate wide = [](const TreeHandle& t) { return t.child_count(t.root()) == 3; };
  SolverOptions opts;
  opts.relative_depth = 5;
  const auto est = rn_ratio_estimate(law, 1, wide, 4000, 5, opts);
  CHECK(est.ratio > 2.0 / 33.0);
  CHECK(est.ratio < 33.0 / 2.0);
  CHECK(est.gw_prob == doctest::Approx(0.5).epsilon(0.1));
}
