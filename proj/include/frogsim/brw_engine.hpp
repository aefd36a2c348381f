#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "frogsim/frog_engine.hpp"
#include "frogsim/rng.hpp"
#include "frogsim/tree.hpp"

namespace frogsim {

/// Weight function w and contraction rate m of a branching-walk
/// supermartingale W_n = sum over particles of w(depth).
struct WeightSchedule {
  /// w(j) = alpha^j with alpha = ((E eta + 1) k)^(-1/2); m = 2 alpha^(-1) / (k + 1).
  struct Regular {
    std::uint32_t k;
    double mean_eta;
  };
  /// w(j) = ((j+2)!/2)^(-1/2) below N, ((N+1)!/2)^(-1/2) alpha^(j-N+1) from N
  /// on, alpha = ((lambda+1)(N+1))^(-1/2); m = max(2/sqrt(5), 2 alpha^(-1)/(N+2)).
  struct Hat {
    double lambda;
    std::uint32_t big_n;
  };
  using Variant = std::variant<Regular, Hat>;

  Variant variant;
  double alpha = 0.0;
  double m = 0.0;
  /// Set when a Regular schedule sits at or above E eta = (k-1)^2/(4k).
  bool warning = false;

  double log_w(std::uint32_t j) const;
  double w(std::uint32_t j) const;
  bool is_hat() const noexcept { return std::holds_alternative<Hat>(variant); }
  std::string describe() const;
};

WeightSchedule make_schedule(WeightSchedule::Variant v);
inline WeightSchedule make_regular_schedule(std::uint32_t k, double mean_eta) {
  return make_schedule(WeightSchedule::Regular{k, mean_eta});
}
inline WeightSchedule make_hat_schedule(double lambda, std::uint32_t big_n) {
  return make_schedule(WeightSchedule::Hat{lambda, big_n});
}

/// (E eta + 1) threshold of the Regular schedule: (k-1)^2 / (4k).
inline double regular_threshold(std::uint32_t k) { return (k - 1.0) * (k - 1.0) / (4.0 * k); }

/// Expected next-tick weight of one particle at depth j together with the
/// particles it gives birth to, divided by w(j). `child_count` is the number
/// of children of the particle's vertex (ignored by Hat, where it is j + 2).
double expected_contribution_ratio(const WeightSchedule& s, std::uint32_t j, std::uint32_t child_count);
/// The same contribution in absolute terms (may underflow for deep j).
double expected_contribution(const WeightSchedule& s, std::uint32_t j, std::uint32_t child_count);

/// Offspring law eta of the branching walk.
struct EtaLaw {
  struct Poisson {
    double mean;
  };
  /// Explicit pmf over nonnegative integers.
  struct Explicit {
    std::vector<std::pair<std::uint32_t, double>> weights;
  };
  std::variant<Poisson, Explicit> variant = Poisson{0.0};

  double mean() const;
  std::uint32_t sample(SplitMix64& gen) const;
  /// Parses "poisson:0.1" or "pmf:0=0.9,1=0.1".
  static EtaLaw parse(const std::string& text);
  std::string describe() const;
};

struct BrwConfig {
  std::uint32_t horizon = 200;
  std::uint32_t depth_cap = 60;
  std::uint64_t max_particles = 100'000'000;
  EtaLaw eta;
  /// Aggregate particles by depth on d-ary and hat trees.
  bool allow_profile = true;
};

struct BrwPoint {
  std::uint32_t n = 0;
  double w = 0.0;
  std::uint64_t particles = 0;
  std::uint64_t returns = 0;  // cumulative root hits
};

struct BrwTrajectory {
  std::vector<BrwPoint> points;
  Termination termination = Termination::kHorizonReached;
  bool profile_mode = false;
  /// Largest relative gap between incremental and recomputed W.
  double max_drift = 0.0;

  /// Columns n, W_n, particles, returns.
  std::string to_tsv(bool header = true) const;
};

/// Simulates the branching walk. Regular schedules: one particle at the
/// root, eta births on every step away from the root. Hat schedules (hat
/// tree only): one particle at the root plus Poisson(lambda) per vertex on
/// levels 1..N-1, with births only on landing at level >= N.
BrwTrajectory run_brw(const TreeHandle& tree, const WeightSchedule& schedule, const BrwConfig& cfg,
                      std::uint64_t seed);

struct DominanceResult {
  std::uint64_t brw_returns = 0;
  std::uint64_t fm_returns = 0;
  std::uint32_t window_end = 0;
  bool holds = true;
  std::string note;
};
/// FM and a Poisson(lambda) branching walk built on the same streams: the
/// first away-landing at a vertex births exactly its sleepers (with their FM
/// streams), later away-steps birth fresh particles. Returns are compared at
/// the earlier of the two stopping times.
DominanceResult dominance_check_brw_fm(const TreeHandle& tree, double lambda, std::uint64_t seed,
                                       const FrogConfig& caps);

}  // namespace frogsim
