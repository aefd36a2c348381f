#include <set>
#include <thread>

#include "doctest.h"
#include "frogsim/error.hpp"
#include "frogsim/offspring.hpp"
#include "frogsim/tree.hpp"

using namespace frogsim;

namespace {

std::vector<std::uint32_t> bfs_counts(const TreeHandle& t, std::size_t limit) {
  std::vector<NodeId> order{t.root()};
  std::vector<std::uint32_t> counts;
  for (std::size_t i = 0; i < order.size() && counts.size() < limit; ++i) {
    const std::uint32_t k = t.child_count(order[i]);
    counts.push_back(k);
    for (std::uint32_t c = 0; c < k; ++c) order.push_back(t.child(order[i], c));
  }
  return counts;
}

}  // namespace

TEST_CASE("offspring laws validate and sample") {
  SplitMix64 gen(1);
  CHECK(OffspringDistribution::constant(2).sample(gen) == 2);
  CHECK_THROWS_AS(OffspringDistribution::constant(1), PreconditionError);
  CHECK_THROWS_AS(OffspringDistribution::corollary_law(2), PreconditionError);
  CHECK_THROWS_AS(OffspringDistribution::pmf({{2, 0.5}, {3, 0.4}}), PreconditionError);
  CHECK_THROWS_AS(OffspringDistribution::constant(70000), PreconditionError);

  const auto law = OffspringDistribution::corollary_law(4);
  CHECK(law.tail(4) == doctest::Approx(1.0 / 1024.0).epsilon(1e-14));
  CHECK(law.mean() == doctest::Approx(2.0 + 2.0 / 1024.0));

  const auto half = OffspringDistribution::pmf({{2, 0.5}, {3, 0.5}});
  double sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) sum += half.sample(gen);
  // 3 sigma of the sample mean: 3 * 0.5 / 1000.
  CHECK(std::abs(sum / n - 2.5) < 0.002);
}

TEST_CASE("corollary law hits the rare branch at rate 1/d^5") {
  const auto law = OffspringDistribution::corollary_law(4);
  SplitMix64 gen(99);
  const int n = 2'000'000;
  int big = 0;
  for (int i = 0; i < n; ++i) big += law.sample(gen) == 4;
  const double p = 1.0 / 1024.0;
  const double sd = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(big - n * p) < 4 * sd);
  CHECK(std::abs(big - n / 256.0) > 10 * sd);
}

TEST_CASE("offspring parse round trip") {
  for (const char* text : {"const:3", "twopoint:2,3,0.5", "pmf:2=0.9,8=0.1", "corollary:4"}) {
    const auto law = OffspringDistribution::parse(text);
    CHECK(OffspringDistribution::parse(law.describe()).support() == law.support());
  }
  CHECK_THROWS_AS(OffspringDistribution::parse("poisson:2"), PreconditionError);
}

TEST_CASE("hat tree level rule") {
  auto t = make_tree(TreeKind::hat(), 0);
  NodeId v = t.root();
  for (std::uint32_t n = 0; n <= 50; ++n) {
    CHECK(t.child_count(v) == n + 2);
    v = t.child(v, t.child_count(v) - 1);
  }
  CHECK(t.children(VertexId::parse("0.1.2")) == 5);
  CHECK(t.children(VertexId::parse("1")) == 3);
}

TEST_CASE("d-ary and joined trees") {
  auto d5 = make_tree(TreeKind::dary(5), 3);
  CHECK(d5.children(VertexId{}) == 5);
  CHECK(d5.children(VertexId::parse("4.4.4")) == 5);

  auto j = make_tree(TreeKind::joined(50), 0);
  CHECK(j.children(VertexId{}) == 2);
  CHECK(j.children(VertexId::parse("0")) == 2);
  CHECK(j.children(VertexId::parse("0.1.0")) == 2);
  CHECK(j.children(VertexId::parse("1")) == 50);
  CHECK(j.children(VertexId::parse("1.49.3")) == 50);
  CHECK_THROWS_AS(make_tree(TreeKind::joined(1), 0), PreconditionError);
}

TEST_CASE("invalid vertices are rejected") {
  auto t = make_tree(TreeKind::dary(2), 0);
  CHECK_THROWS_WITH_AS(t.children(VertexId::parse("0.2")), "invalid vertex: 0.2", InvalidVertex);
}

TEST_CASE("GW trees are a pure function of seed and path") {
  const auto kind = TreeKind::gw(OffspringDistribution::two_point(2, 3, 0.5));
  auto a = make_tree(kind, 42);
  auto b = make_tree(kind, 42);
  auto c = make_tree(kind, 43);
  CHECK(bfs_counts(a, 1000) == bfs_counts(b, 1000));
  CHECK(bfs_counts(a, 1000) != bfs_counts(c, 1000));

  // Exploration order does not matter: go deep first on a fresh handle.
  auto d = make_tree(kind, 42);
  const VertexId deep = VertexId::parse("1.0.1.1.0.1");
  const std::uint32_t deep_count = d.children(deep);
  CHECK(a.children(deep) == deep_count);
}

TEST_CASE("GW two-point frequencies") {
  auto t = make_tree(TreeKind::gw(OffspringDistribution::two_point(2, 3, 0.5)), 7);
  const auto counts = bfs_counts(t, 10'000);
  double threes = 0;
  for (auto k : counts) threes += k == 3;
  CHECK(std::abs(threes / counts.size() - 0.5) < 0.015);
}

TEST_CASE("AGW root conventions") {
  const auto law = OffspringDistribution::two_point(2, 3, 0.5);
  std::set<std::uint32_t> extra, dbl;
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto a = make_tree(TreeKind::agw(law, AgwMode::kExtraSubtree), s);
    auto b = make_tree(TreeKind::agw(law, AgwMode::kDoubleRoot), s);
    extra.insert(a.child_count(a.root()));
    dbl.insert(b.child_count(b.root()));
    CHECK(a.child_count(a.child(a.root(), 0)) >= 2);
  }
  CHECK(extra == std::set<std::uint32_t>{3, 4});
  CHECK(dbl == std::set<std::uint32_t>{4, 5, 6});
}

TEST_CASE("subtree handles agree with the parent tree") {
  auto t = make_tree(TreeKind::gw(OffspringDistribution::two_point(2, 3, 0.5)), 5);
  const NodeId v = t.find(VertexId::parse("1.0"));
  auto sub = t.subtree(v);
  CHECK(sub.depth(sub.root()) == 0);
  for (const char* rel : {"", "0", "1.1", "0.1.0"}) {
    const VertexId r = VertexId::parse(rel);
    VertexId full = VertexId::parse("1.0");
    full.path.insert(full.path.end(), r.path.begin(), r.path.end());
    CHECK(sub.children(r) == t.children(full));
  }
  auto j = make_tree(TreeKind::joined(7), 0);
  auto right = j.subtree(j.child(j.root(), 1));
  CHECK(right.child_count(right.root()) == 7);
  CHECK(right.homogeneous_class(right.root()).value() == ClassKey{1, 0});
  CHECK(right.class_child_count(ClassKey{1, 3}) == 7);
  CHECK_FALSE(j.homogeneous_class(j.root()).has_value());
}

TEST_CASE("truncate sizes and serialization") {
  auto d2 = make_tree(TreeKind::dary(2), 0);
  CHECK(truncate(d2, 3).size() == 15);
  auto hat = make_tree(TreeKind::hat(), 0);
  CHECK(truncate(hat, 3).size() == 33);
  const auto root_only = truncate(d2, 0);
  CHECK(root_only.size() == 1);
  CHECK(root_only.vertices[0].boundary);
  CHECK_THROWS_AS(truncate(hat, 8, 1000), VertexCapExceeded);

  auto gw = make_tree(TreeKind::gw(OffspringDistribution::two_point(2, 3, 0.5)), 11);
  const auto ft = truncate(gw, 4);
  const auto text = ft.serialize();
  CHECK(text.substr(0, 2) == "\t" + std::to_string(ft.vertices[0].child_count).substr(0, 1));
  const auto back = FiniteTree::parse(text);
  CHECK(back.serialize() == text);
  auto fh = make_tree(back.to_kind(), 0);
  CHECK(fh.children(VertexId::parse("1.1.0")) == gw.children(VertexId::parse("1.1.0")));
}

TEST_CASE("vertex cap aborts materialization") {
  auto t = make_tree(TreeKind::dary(10), 0, TreeOptions{100});
  CHECK_THROWS_AS(truncate(t, 3, 1'000'000), VertexCapExceeded);
}

TEST_CASE("concurrent readers see one tree") {
  const auto kind = TreeKind::gw(OffspringDistribution::two_point(2, 3, 0.5));
  auto shared = make_tree(kind, 77);
  std::vector<std::vector<std::uint32_t>> seen(4);
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w)
    workers.emplace_back([&, w] { seen[w] = bfs_counts(shared, 20'000); });
  for (auto& th : workers) th.join();
  auto reference = make_tree(kind, 77);
  const auto expected = bfs_counts(reference, 20'000);
  for (const auto& s : seen) CHECK(s == expected);
}
