#include "frogsim/truncated_engine.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "frogsim/error.hpp"
#include "frogsim/harmonic.hpp"

namespace frogsim {

void TruncConfig::validate() const {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be >= 0");
  if (p && !(*p >= 0.5 && *p < 1.0)) throw PreconditionError("p must lie in [1/2, 1)");
  if (depth_cap < 2) throw PreconditionError("depth_cap must be >= 2");
  if (horizon < 1) throw PreconditionError("horizon must be >= 1");
  if (max_active < 1) throw PreconditionError("max_active must be >= 1");
}

nlohmann::json EliminationLedger::to_json() const {
  return {{"landed", landed},
          {"away_step_onto_landed", away_step_onto_landed},
          {"simultaneity_loser", simultaneity_loser},
          {"exclusivity_violations", exclusivity_violations}};
}

namespace {

class TruncatedRun {
 public:
  TruncatedRun(const TreeHandle& tree, const TruncConfig& cfg, std::uint64_t seed)
      : tree_(tree), cfg_(cfg), seed_(seed), limits_{cfg.depth_cap, cfg.step_budget} {}

  TfmRun run() {
    cfg_.validate();
    try {
      init();
      while (tick()) {
      }
    } catch (const VertexCapExceeded& e) {
      out_.stats.termination = Termination::kVertexCapExceeded;
      out_.stats.extra["abort"] = e.what();
    }
    out_.stats.vertices_materialized = tree_.materialized();
    out_.stats.extra["elimination_deaths"] = out_.ledger.to_json();
    if (out_.target_activated_at) out_.stats.extra["target_activated_at"] = *out_.target_activated_at;
    return std::move(out_);
  }

 private:
  bool is_landed(NodeId v) const { return v.value < landed_.size() && landed_[v.value]; }
  void set_landed(NodeId v) {
    if (landed_.size() <= v.value) {
      landed_.resize(std::max<std::size_t>(v.value + 1, landed_.size() * 2), 0);
      first_entries_.resize(landed_.size(), 0);
    }
    landed_[v.value] = 1;
  }

  void add_frog(NodeId origin, std::uint32_t index, bool leaf_kill, std::uint32_t t) {
    TfmFrog f;
    f.origin = origin;
    f.index = index;
    f.activated_at = t;
    f.leaf_kill = leaf_kill;
    SplitMix64 gen = frog_stream(seed_, tree_.key(origin), index);
    if (leaf_kill)
      f.walk = walk_with_leaf_kill(tree_, origin, *cfg_.p, gen, limits_);
    else if (tree_.is_root(origin))
      f.walk = root_frog_lerw(tree_, gen, limits_);
    else
      f.walk = lerw_to_root_or_escape(tree_, origin, gen, limits_);
    out_.frogs.push_back(std::move(f));
    woken_.push_back(static_cast<std::uint32_t>(out_.frogs.size() - 1));
    ++out_.stats.frogs_activated;
  }

  void activate(NodeId v, std::uint32_t t) {
    out_.stats.note_activation(v, tree_.depth(v), t);
    if (cfg_.stop_when_activated && *cfg_.stop_when_activated == v) out_.target_activated_at = t;
    const std::uint32_t n = sleeper_count(seed_, tree_.key(v), cfg_.lambda);
    for (std::uint32_t k = 0; k < n; ++k) add_frog(v, k, cfg_.p.has_value(), t);
  }

  void init() {
    const NodeId root = tree_.root();
    set_landed(root);
    ++out_.ledger.landed;
    out_.stats.note_activation(root, 0, 0);
    add_frog(root, 0, false, 0);
    if (cfg_.p) {
      const std::uint32_t extra = sleeper_count(seed_, tree_.key(root), cfg_.lambda);
      for (std::uint32_t k = 1; k <= extra; ++k) add_frog(root, k, true, 0);
    }
    active_.swap(woken_);
    out_.stats.peak_active = active_.size();
  }

  /// Frog has reached the last vertex of its trajectory.
  void finish(TfmFrog& f) {
    if (f.walk.tag == LerwTag::kHitRoot) {
      f.fate = FrogFate::kHitRoot;
      ++hits_;
    } else {
      f.fate = FrogFate::kTruncated;
      ++out_.stats.truncated_walks;
    }
  }

  void advance(std::uint32_t idx, std::vector<std::uint32_t>& next_active) {
    TfmFrog& f = out_.frogs[idx];
    ++f.pos;
    if (f.pos + 1 >= f.walk.path.size())
      finish(f);
    else
      next_active.push_back(idx);
  }

  bool tick() {
    RunStats& st = out_.stats;
    if (active_.empty()) {
      st.termination = Termination::kExtinct;
      return false;
    }
    if (clock_ >= cfg_.horizon) {
      st.termination = Termination::kHorizonReached;
      return false;
    }
    const std::uint32_t t = ++clock_;
    hits_ = 0;
    std::vector<std::uint32_t> next_active;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> arrivals;  // (vertex, frog)
    for (std::uint32_t idx : active_) {
      TfmFrog& f = out_.frogs[idx];
      if (f.pos + 1 >= f.walk.path.size()) {  // e.g. killed on its first step
        finish(f);
        continue;
      }
      const NodeId cur = f.walk.path[f.pos];
      const NodeId next = f.walk.path[f.pos + 1];
      ++st.steps;
      if (!tree_.is_root(next) && tree_.depth(next) >= cfg_.depth_cap) {
        ++f.pos;
        f.fate = FrogFate::kRetiredAtCap;
        ++st.retired_at_cap;
        continue;
      }
      const bool away = !tree_.is_root(next) && tree_.depth(next) > tree_.depth(cur);
      if (!away) {
        advance(idx, next_active);
        continue;
      }
      if (is_landed(next)) {
        ++f.pos;
        f.fate = FrogFate::kDied;
        ++out_.ledger.away_step_onto_landed;
        continue;
      }
      arrivals.emplace_back(next.value, idx);
    }

    std::sort(arrivals.begin(), arrivals.end());
    for (std::size_t i = 0; i < arrivals.size();) {
      std::size_t j = i;
      while (j < arrivals.size() && arrivals[j].first == arrivals[i].first) ++j;
      const NodeId v{arrivals[i].first};
      std::size_t winner = i;
      if (j - i > 1) {
        SplitMix64 gen = keyed_stream(seed_, StreamTag::kTieBreak, {tree_.key(v), t});
        winner = i + bounded(gen, static_cast<std::uint32_t>(j - i));
      }
      for (std::size_t k = i; k < j; ++k) {
        if (k == winner) continue;
        TfmFrog& loser = out_.frogs[arrivals[k].second];
        ++loser.pos;
        loser.fate = FrogFate::kDied;
        ++out_.ledger.simultaneity_loser;
      }
      set_landed(v);
      ++out_.ledger.landed;
      if (++first_entries_[v.value] > 1) ++out_.ledger.exclusivity_violations;
      out_.landers.emplace_back(v, arrivals[winner].second);
      advance(arrivals[winner].second, next_active);
      activate(v, t);
      i = j;
    }

    next_active.insert(next_active.end(), woken_.begin(), woken_.end());
    woken_.clear();
    active_.swap(next_active);

    st.root_returns_by_time.push_back(st.root_returns_by_time.back());
    if (hits_) st.record_return(t, hits_);
    st.ticks = t;
    st.peak_active = std::max<std::uint64_t>(st.peak_active, active_.size());
    if (out_.target_activated_at) {
      st.termination = Termination::kHorizonReached;
      return false;
    }
    if (active_.size() > cfg_.max_active) {
      st.termination = Termination::kPopulationCapped;
      return false;
    }
    return true;
  }

  const TreeHandle& tree_;
  TruncConfig cfg_;
  std::uint64_t seed_;
  WalkLimits limits_;
  TfmRun out_;
  std::vector<std::uint8_t> landed_;
  std::vector<std::uint8_t> first_entries_;
  std::vector<std::uint32_t> active_;
  std::vector<std::uint32_t> woken_;
  std::uint32_t clock_ = 0;
  std::uint64_t hits_ = 0;
};

}  // namespace

TfmRun run_truncated(const TreeHandle& tree, const TruncConfig& cfg, std::uint64_t seed) {
  return TruncatedRun(tree, cfg, seed).run();
}

RunStats run_tfm(const TreeHandle& tree, TruncConfig cfg, std::uint64_t seed) {
  cfg.p.reset();
  return run_truncated(tree, cfg, seed).stats;
}

RunStats run_tfm_p(const TreeHandle& tree, const TruncConfig& cfg, std::uint64_t seed) {
  if (!cfg.p) throw PreconditionError("run_tfm_p: p is required");
  return run_truncated(tree, cfg, seed).stats;
}

// ---------------------------------------------------------------------------
// Coupling

nlohmann::json CouplingAudit::to_json() const {
  return {{"window_end", window_end},         {"fm_termination", fm_termination}, {"z1_window", z1_window},
          {"z2_window", z2_window},           {"fm_frogs", fm_frogs},             {"tfm_frogs", tfm_frogs},
          {"subpath_checked", subpath_checked}, {"generic_checked", generic_checked}, {"dominance", dominance},
          {"tfm_activated", tfm_activated},   {"fm_window_coverage", fm_window_coverage},
          {"window_dominance", window_dominance}, {"subset_ok", subset_ok},       {"subpath_ok", subpath_ok},
          {"notes", notes}};
}

namespace {

/// The partner's simple random walk from its origin until depth_cap.
std::vector<NodeId> partner_walk(const TreeHandle& tree, NodeId origin, std::uint32_t index, std::uint64_t seed,
                                 const CouplingCaps& caps) {
  SplitMix64 gen = frog_stream(seed, tree.key(origin), index);
  std::vector<NodeId> path{origin};
  NodeId v = origin;
  for (std::uint64_t s = 0; s < caps.step_budget; ++s) {
    v = srw_step(tree, v, gen);
    path.push_back(v);
    if (tree.depth(v) >= caps.depth_cap) break;
  }
  return path;
}

/// Is `realized` the loop erasure of some prefix of `walk` (after dropping
/// `skip` leading entries of both)? Returns the matching prefix end or -1.
long match_erased_prefix(const std::vector<NodeId>& walk, const std::vector<NodeId>& realized, std::size_t skip) {
  if (realized.size() <= skip) return static_cast<long>(skip) - 1;
  if (walk.size() <= skip || walk[skip] != realized[skip]) return -1;
  TreeLoopEraser erased(walk[skip]);
  const std::size_t want = realized.size() - skip;
  for (std::size_t j = skip;; ++j) {
    const auto& p = erased.path();
    if (p.size() == want && p.back() == realized.back() &&
        std::equal(p.begin(), p.end(), realized.begin() + static_cast<std::ptrdiff_t>(skip)))
      return static_cast<long>(j);
    if (j + 1 >= walk.size()) return -1;
    erased.step(walk[j + 1]);
  }
}

}  // namespace

CoupledResult coupled_run(const TreeHandle& tree, double lambda, std::uint64_t seed, const CouplingCaps& caps) {
  CoupledResult out;
  FrogConfig fc;
  fc.lambda = lambda;
  fc.horizon = caps.horizon;
  fc.depth_cap = caps.depth_cap;
  fc.max_active = caps.max_active;
  out.fm = run_fm(tree, fc, seed);
  CouplingAudit& audit = out.audit;
  audit.window_end = out.fm.ticks;
  audit.fm_termination = to_string(out.fm.termination);
  if (out.fm.termination == Termination::kVertexCapExceeded) audit.notes.push_back("fm aborted at the vertex cap");

  TruncConfig tc;
  tc.lambda = lambda;
  tc.depth_cap = caps.depth_cap;
  tc.horizon = std::max<std::uint32_t>(1, out.fm.ticks);
  tc.max_active = std::numeric_limits<std::uint64_t>::max();
  tc.step_budget = caps.step_budget;
  TfmRun tfm = out.fm.ticks == 0 ? TfmRun{} : run_truncated(tree, tc, seed);
  out.tfm = tfm.stats;

  // Z1: root hits along the full walks of the FM frogs at every vertex FM
  // activates in the window or TFM lands on. The latter are activated by FM
  // eventually (the subset audit below checks it), so each counted frog is a
  // genuine FM frog, and every TFM frog that returns has its partner counted.
  constexpr std::uint32_t kNever = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> fm_time(tree.materialized(), kNever);
  std::vector<NodeId> z1_vertices;
  for (const auto& [v, t] : out.fm.first_activation) {
    fm_time[v.value] = t;
    z1_vertices.push_back(v);
  }
  for (const auto& [v, t] : tfm.stats.first_activation) {
    if (v.value >= fm_time.size()) fm_time.resize(v.value + 1, kNever);
    if (fm_time[v.value] == kNever) z1_vertices.push_back(v);
  }
  // Partner walks are generated once and shared with the trajectory check.
  std::unordered_map<std::uint64_t, std::vector<NodeId>> walks;
  auto walk_of = [&](NodeId v, std::uint32_t k) -> const std::vector<NodeId>& {
    const std::uint64_t key = (static_cast<std::uint64_t>(v.value) << 32) | k;
    auto it = walks.find(key);
    if (it == walks.end()) it = walks.emplace(key, partner_walk(tree, v, k, seed, caps)).first;
    return it->second;
  };
  for (NodeId v : z1_vertices) {
    const std::uint32_t n = tree.is_root(v) ? 1 : sleeper_count(seed, tree.key(v), lambda);
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto& walk = walk_of(v, k);
      for (std::size_t i = 1; i < walk.size(); ++i) out.z1 += tree.is_root(walk[i]);
      ++audit.fm_frogs;
    }
  }

  // Z2: TFM frogs whose trajectory ends at the root and that were not eliminated.
  for (const auto& f : tfm.frogs) {
    ++audit.tfm_frogs;
    if (f.walk.tag == LerwTag::kHitRoot && (f.fate == FrogFate::kHitRoot || f.fate == FrogFate::kAlive)) ++out.z2;
  }

  for (const auto& [v, t] : tfm.stats.first_activation) {
    ++audit.tfm_activated;
    audit.fm_window_coverage += v.value < fm_time.size() && fm_time[v.value] != kNever;
  }
  std::vector<std::vector<NodeId>> landed_by(tfm.frogs.size());
  for (const auto& [v, idx] : tfm.landers) landed_by[idx].push_back(v);
  std::vector<std::uint8_t> covered(tree.materialized(), 0);
  covered[tree.root().value] = 1;

  // Every realized TFM trajectory is the erasure of a prefix of the partner walk.
  constexpr std::uint64_t kGenericChecks = 64;
  for (const auto& f : tfm.frogs) {
    const std::vector<NodeId> realized(f.walk.path.begin(), f.walk.path.begin() + f.pos + 1);
    const auto& walk = walk_of(f.origin, f.index);
    // Frogs are stored in activation order, so the origin's lander came first.
    const std::size_t me = static_cast<std::size_t>(&f - tfm.frogs.data());
    const bool origin_covered = f.origin.value < covered.size() && covered[f.origin.value];
    for (NodeId v : landed_by[me]) {
      if (origin_covered && std::find(walk.begin(), walk.end(), v) != walk.end()) {
        if (covered.size() <= v.value) covered.resize(v.value + 1, 0);
        covered[v.value] = 1;
      } else {
        audit.subset_ok = false;
        audit.notes.push_back("tfm lander of " + tree.vertex_id(v).to_string() + " has no fm partner reaching it");
      }
    }
    const std::size_t skip = tree.is_root(f.origin) ? 1 : 0;
    if (skip && (walk.empty() || realized[0] != walk[0])) {
      audit.subpath_ok = false;
      continue;
    }
    const long j = match_erased_prefix(walk, realized, skip);
    ++audit.subpath_checked;
    if (j < 0) {
      audit.subpath_ok = false;
      audit.notes.push_back("trajectory of frog " + std::to_string(f.index) + " from " +
                            tree.vertex_id(f.origin).to_string() + " is not an erased prefix");
      continue;
    }
    if (audit.generic_checked < kGenericChecks && realized.size() > skip) {
      const std::vector<NodeId> prefix(walk.begin() + static_cast<std::ptrdiff_t>(skip), walk.begin() + j + 1);
      const auto erased = loop_erase<NodeId, NodeIdHash>(prefix);
      if (!std::equal(erased.begin(), erased.end(), realized.begin() + static_cast<std::ptrdiff_t>(skip),
                      realized.end()))
        audit.subpath_ok = false;
      ++audit.generic_checked;
    }
  }

  audit.z1_window = out.fm.total_root_returns;
  audit.z2_window = out.tfm.total_root_returns;
  audit.dominance = out.z1 >= out.z2;
  audit.window_dominance = audit.z1_window >= audit.z2_window;
  if (!audit.window_dominance) audit.notes.push_back("windowed counts violate dominance at the horizon boundary");
  out.tfm.extra["coupling_audit"] = audit.to_json();
  return out;
}

// ---------------------------------------------------------------------------
// Activation profile

nlohmann::json ActivationProfile::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"p", r.p},
                         {"activated", r.activated},
                         {"replicas", r.replicas},
                         {"estimate", r.estimate},
                         {"wilson_lo", r.wilson.lo},
                         {"wilson_hi", r.wilson.hi},
                         {"flagged", r.flagged}});
  return {{"rows", rows_json},
          {"argmin_p", rows.empty() ? 0.0 : rows[argmin].p},
          {"min_estimate", min_estimate},
          {"min_wilson_lo", min_interval.lo},
          {"min_wilson_hi", min_interval.hi}};
}

namespace {

void check_p_grid(const std::vector<double>& p_grid) {
  if (p_grid.empty()) throw PreconditionError("activation_profile_min_over_p: empty p grid");
  for (double p : p_grid)
    if (!(p >= 0.5 && p < 1.0)) throw PreconditionError("activation_profile_min_over_p: p outside [1/2, 1)");
}

}  // namespace

std::vector<std::uint8_t> activation_sample(const TreeKind& kind, double lambda, const std::vector<double>& p_grid,
                                            std::uint32_t level, std::uint64_t replica_seed,
                                            const ActivationOptions& options) {
  check_p_grid(p_grid);
  TreeHandle tree(kind, replica_seed);
  SplitMix64 ray_gen = keyed_stream(replica_seed, StreamTag::kRay);
  const HarmonicRay ray = sample_harmonic_ray(tree, level + 1, options.ray_depth_cap, ray_gen);
  TreeHandle sub = tree.subtree(ray.vertices[level]);
  const NodeId target = sub.child(sub.root(), tree.index_in_parent(ray.vertices[level + 1]));
  std::vector<std::uint8_t> hit(p_grid.size(), 0);
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    TruncConfig cfg;
    cfg.lambda = lambda;
    cfg.p = p_grid[i];
    cfg.depth_cap = options.depth_cap;
    cfg.horizon = options.horizon;
    cfg.max_active = options.max_active;
    cfg.stop_when_activated = target;
    hit[i] = run_truncated(sub, cfg, replica_seed).target_activated_at.has_value();
  }
  return hit;
}

ActivationProfile profile_from_counts(const std::vector<double>& p_grid, const std::vector<std::uint64_t>& hits,
                                      std::uint64_t replicas) {
  ActivationProfile out;
  for (std::size_t i = 0; i < p_grid.size(); ++i) {
    ActivationRow row;
    row.p = p_grid[i];
    row.activated = hits[i];
    row.replicas = replicas;
    row.estimate = replicas ? static_cast<double>(hits[i]) / replicas : 0.0;
    row.wilson = wilson_interval(hits[i], replicas);
    row.flagged = row.wilson.width() > 0.02;
    out.rows.push_back(row);
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].estimate < out.rows[out.argmin].estimate) out.argmin = i;
  if (!out.rows.empty()) {
    out.min_estimate = out.rows[out.argmin].estimate;
    out.min_interval = out.rows[out.argmin].wilson;
  }
  return out;
}

ActivationProfile activation_profile_min_over_p(const TreeKind& kind, double lambda, const std::vector<double>& p_grid,
                                                std::uint32_t level, std::uint64_t replicas, std::uint64_t seed,
                                                ActivationOptions options) {
  std::vector<std::uint64_t> hits(p_grid.size(), 0);
  check_p_grid(p_grid);
  for (std::uint64_t r = 0; r < replicas; ++r) {
    const std::uint64_t s = hash_words({seed, static_cast<std::uint64_t>(StreamTag::kReplica), r});
    const auto x = activation_sample(kind, lambda, p_grid, level, s, options);
    for (std::size_t i = 0; i < x.size(); ++i) hits[i] += x[i];
  }
  return profile_from_counts(p_grid, hits, replicas);
}

}  // namespace frogsim
