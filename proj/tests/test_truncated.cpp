#include <map>

#include "doctest.h"
#include "frogsim/error.hpp"
#include "frogsim/truncated_engine.hpp"

using namespace frogsim;

namespace {

void check_ledger(const TreeHandle& tree, const TfmRun& run) {
  const auto& L = run.ledger;
  CHECK(L.exclusivity_violations == 0);
  CHECK(L.landed == run.stats.first_activation.size());
  std::uint64_t died = 0, hit = 0;
  for (const auto& f : run.frogs) {
    died += f.fate == FrogFate::kDied;
    hit += f.fate == FrogFate::kHitRoot;
    if (f.fate == FrogFate::kHitRoot) CHECK(f.walk.tag == LerwTag::kHitRoot);
  }
  CHECK(died == L.away_step_onto_landed + L.simultaneity_loser);
  CHECK(hit == run.stats.total_root_returns);
  // The landed set stays connected: parents land strictly earlier.
  std::map<std::uint32_t, std::uint32_t> when;
  for (const auto& [v, t] : run.stats.first_activation) {
    if (!tree.is_root(v)) {
      const auto it = when.find(tree.parent(v).value);
      REQUIRE(it != when.end());
      CHECK(it->second < t);
    }
    when[v.value] = t;
  }
}

}  // namespace

TEST_CASE("lone truncated frog returns with probability 1/2") {
  TruncConfig cfg;
  cfg.depth_cap = 40;
  for (bool with_p : {false, true}) {
    if (with_p) cfg.p = 0.7;
    const int n = 40'000;
    int hit = 0;
    for (int r = 0; r < n; ++r) {
      auto tree = make_tree(TreeKind::dary(2), 0);
      const auto run = run_truncated(tree, cfg, r);
      REQUIRE(run.frogs.size() == 1);
      hit += run.stats.total_root_returns;
    }
    CHECK(std::abs(hit / double(n) - 0.5) < 5 * std::sqrt(0.25 / n));
  }
}

TEST_CASE("elimination ledger balances") {
  bool saw_tie = false, saw_landed = false;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto tree = make_tree(TreeKind::dary(3), seed);
    TruncConfig cfg;
    cfg.lambda = 2.5;
    cfg.horizon = 200;
    cfg.depth_cap = 30;
    cfg.max_active = 20'000;
    if (seed % 2) cfg.p = 0.5;
    const auto run = run_truncated(tree, cfg, seed);
    check_ledger(tree, run);
    saw_tie |= run.ledger.simultaneity_loser > 0;
    saw_landed |= run.ledger.away_step_onto_landed > 0;
    const auto j = run.stats.extra["elimination_deaths"];
    CHECK(j["landed"] == run.ledger.landed);
  }
  CHECK(saw_tie);
  CHECK(saw_landed);
}

TEST_CASE("leaf kills count as root hits") {
  std::uint64_t kills = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto tree = make_tree(TreeKind::dary(2), seed);
    TruncConfig cfg;
    cfg.lambda = 1.5;
    cfg.p = 0.6;
    cfg.depth_cap = 30;
    cfg.max_active = 20'000;
    const auto run = run_truncated(tree, cfg, seed);
    for (const auto& f : run.frogs) {
      if (!f.walk.killed_at_leaf) continue;
      CHECK(f.leaf_kill);
      CHECK(f.walk.path.back() == tree.root());
      kills += f.fate == FrogFate::kHitRoot;
    }
    check_ledger(tree, run);
  }
  CHECK(kills > 0);
}

TEST_CASE("coupled runs satisfy every audit") {
  CouplingCaps caps;
  caps.horizon = 300;
  caps.depth_cap = 40;
  caps.max_active = 2000;
  std::uint64_t violations = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const double lambda = seed % 2 ? 0.5 : 2.0;
    auto tree = seed % 4 < 2 ? make_tree(TreeKind::dary(2), seed)
                             : make_tree(TreeKind::gw(OffspringDistribution::pmf({{2, 0.5}, {3, 0.5}})), seed);
    const auto res = coupled_run(tree, lambda, seed, caps);
    CHECK(res.audit.subset_ok);
    CHECK(res.audit.subpath_ok);
    CHECK(res.audit.dominance);
    CHECK(res.audit.subpath_checked == res.audit.tfm_frogs);
    CHECK(res.audit.generic_checked > 0);
    CHECK(res.audit.fm_window_coverage <= res.audit.tfm_activated);
    violations += !res.audit.ok();
  }
  CHECK(violations == 0);
}

TEST_CASE("coupling without sleepers") {
  // Only the root frogs exist; Z2 = 1 exactly when the partner walk returns.
  CouplingCaps caps;
  caps.horizon = 300;
  caps.depth_cap = 40;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto tree = make_tree(TreeKind::dary(2), seed);
    const auto res = coupled_run(tree, 0.0, seed, caps);
    SplitMix64 gen = frog_stream(seed, tree.key(tree.root()), 0);
    bool returns = false;
    NodeId v = tree.root();
    for (int s = 0; s < 10'000 && !returns; ++s) {
      v = srw_step(tree, v, gen);
      if (tree.is_root(v)) returns = true;
      if (tree.depth(v) >= caps.depth_cap) break;
    }
    CHECK(res.z2 == (returns ? 1u : 0u));
    CHECK(res.z1 >= res.z2);
  }
}

TEST_CASE("activation profile without sleepers") {
  // With lambda = 0 only the root frog of T+(v_m) moves, so v_{m+1} is
  // activated iff its first step picks it: probability 1/d for every p.
  ActivationOptions opt;
  opt.depth_cap = 30;
  const auto prof = activation_profile_min_over_p(TreeKind::dary(2), 0.0, {0.5, 0.9}, 2, 4000, 7, opt);
  REQUIRE(prof.rows.size() == 2);
  CHECK(prof.rows[0].activated == prof.rows[1].activated);
  CHECK(prof.rows[0].wilson.contains(0.5));
  CHECK(prof.min_interval.lo <= prof.min_estimate);
  CHECK(prof.to_json()["rows"].size() == 2);
  CHECK_THROWS_AS(activation_profile_min_over_p(TreeKind::dary(2), 1.0, {0.4}, 1, 10, 1), PreconditionError);
}

TEST_CASE("target activation stops the run") {
  auto tree = make_tree(TreeKind::dary(2), 0);
  TruncConfig cfg;
  cfg.lambda = 3.0;
  cfg.p = 0.5;
  cfg.stop_when_activated = tree.child(tree.root(), 0);
  int stopped = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto run = run_truncated(tree, cfg, seed);
    if (run.target_activated_at) {
      ++stopped;
      CHECK(run.stats.ticks == *run.target_activated_at);
    }
  }
  CHECK(stopped > 0);
  cfg.p = 1.0;
  CHECK_THROWS_AS(run_truncated(tree, cfg, 0), PreconditionError);
  cfg.p = 0.3;
  CHECK_THROWS_AS(run_truncated(tree, cfg, 0), PreconditionError);
  CHECK_THROWS_AS(run_tfm_p(tree, TruncConfig{}, 0), PreconditionError);
}
