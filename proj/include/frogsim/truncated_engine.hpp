#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "frogsim/frog_engine.hpp"
#include "frogsim/stats.hpp"
#include "frogsim/tree.hpp"
#include "frogsim/walks.hpp"

namespace frogsim {

struct TruncConfig {
  double lambda = 0.0;
  /// Leaf-kill probability; absent for the plain truncated model.
  std::optional<double> p;
  std::uint32_t depth_cap = 60;
  std::uint64_t max_active = 1'000'000;
  std::uint32_t horizon = 1000;
  std::uint64_t step_budget = kDefaultStepBudget;
  /// Stop as soon as this vertex is activated.
  std::optional<NodeId> stop_when_activated;
  std::uint32_t activation_record_depth = 4;

  void validate() const;
};

struct EliminationLedger {
  std::uint64_t landed = 0;
  std::uint64_t away_step_onto_landed = 0;
  std::uint64_t simultaneity_loser = 0;
  /// Vertices first entered by more than one surviving away-step (must be 0).
  std::uint64_t exclusivity_violations = 0;

  nlohmann::json to_json() const;
};

enum class FrogFate { kAlive, kHitRoot, kRetiredAtCap, kDied, kTruncated };

/// One frog of a truncated run with its precomputed trajectory.
struct TfmFrog {
  NodeId origin;
  std::uint32_t index = 0;
  std::uint32_t activated_at = 0;
  bool leaf_kill = false;
  LerwOutcome walk;
  /// Index into walk.path of the current (or final) position.
  std::uint32_t pos = 0;
  FrogFate fate = FrogFate::kAlive;
};

struct TfmRun {
  RunStats stats;
  EliminationLedger ledger;
  std::vector<TfmFrog> frogs;
  /// Each landed non-root vertex with the index (into frogs) of its lander.
  std::vector<std::pair<NodeId, std::uint32_t>> landers;
  std::optional<std::uint32_t> target_activated_at;
};

/// Truncated model; T+ with leaf kill when cfg.p is set.
TfmRun run_truncated(const TreeHandle& tree, const TruncConfig& cfg, std::uint64_t seed);
RunStats run_tfm(const TreeHandle& tree, TruncConfig cfg, std::uint64_t seed);
RunStats run_tfm_p(const TreeHandle& tree, const TruncConfig& cfg, std::uint64_t seed);

struct CouplingCaps {
  std::uint32_t horizon = 1000;
  std::uint32_t depth_cap = 60;
  std::uint64_t max_active = 2000;
  std::uint64_t step_budget = kDefaultStepBudget;
};

struct CouplingAudit {
  std::uint32_t window_end = 0;
  std::string fm_termination;
  /// Root hits within [0, window_end] as realized by both engines.
  std::uint64_t z1_window = 0;
  std::uint64_t z2_window = 0;
  std::uint64_t fm_frogs = 0;
  std::uint64_t tfm_frogs = 0;
  std::uint64_t subpath_checked = 0;
  std::uint64_t generic_checked = 0;
  bool dominance = true;         // Z1 >= Z2
  bool window_dominance = true;  // z1_window >= z2_window
  /// Every TFM-activated vertex lies on the full walk of its lander's
  /// partner, whose origin is itself covered, so FM activates it too.
  bool subset_ok = true;
  /// TFM-activated vertices that FM had already activated inside the window.
  std::uint64_t fm_window_coverage = 0;
  std::uint64_t tfm_activated = 0;
  bool subpath_ok = true;        // every TFM path is the erasure of a partner prefix
  std::vector<std::string> notes;

  bool ok() const noexcept { return dominance && subset_ok && subpath_ok; }
  nlohmann::json to_json() const;
};

/// FM on T1 and TFM on T2 driven by shared per-frog streams, so each TFM
/// frog follows the loop erasure of its partner's walk. Z1 counts root hits
/// along the full walks of the FM frogs at vertices FM activates in its
/// window or TFM lands on (FM reaches those too, eventually); Z2 counts TFM
/// frogs from the same window whose trajectory reaches the root and that
/// survive (upward moves are never eliminated).
struct CoupledResult {
  std::uint64_t z1 = 0;
  std::uint64_t z2 = 0;
  CouplingAudit audit;
  RunStats fm;
  RunStats tfm;
};
CoupledResult coupled_run(const TreeHandle& tree, double lambda, std::uint64_t seed, const CouplingCaps& caps);

struct ActivationRow {
  double p = 0.0;
  std::uint64_t activated = 0;
  std::uint64_t replicas = 0;
  double estimate = 0.0;
  Interval wilson;
  bool flagged = false;  // interval wider than 0.02
};
struct ActivationProfile {
  std::vector<ActivationRow> rows;
  std::size_t argmin = 0;
  double min_estimate = 0.0;
  Interval min_interval;
  nlohmann::json to_json() const;
};

struct ActivationOptions {
  std::uint32_t depth_cap = 60;
  std::uint32_t horizon = 1000;
  std::uint64_t max_active = 100'000;
  std::uint32_t ray_depth_cap = 40;
};

/// One replica of the profile: activation indicator per grid entry.
std::vector<std::uint8_t> activation_sample(const TreeKind& kind, double lambda, const std::vector<double>& p_grid,
                                            std::uint32_t level, std::uint64_t replica_seed,
                                            const ActivationOptions& options = {});
ActivationProfile profile_from_counts(const std::vector<double>& p_grid, const std::vector<std::uint64_t>& hits,
                                      std::uint64_t replicas);

/// Per replica: draw a tree, a harmonic ray v_0..v_{m+1}, and estimate
/// P(v_{m+1} activated) for TFM^(lambda,p) on T+(v_m), every p in the grid
/// sharing the replica's random numbers.
ActivationProfile activation_profile_min_over_p(const TreeKind& kind, double lambda, const std::vector<double>& p_grid,
                                                std::uint32_t level, std::uint64_t replicas, std::uint64_t seed,
                                                ActivationOptions options = {});

}  // namespace frogsim
