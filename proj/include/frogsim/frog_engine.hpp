#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "frogsim/rng.hpp"
#include "frogsim/tree.hpp"

namespace frogsim {

enum class Termination { kHorizonReached, kPopulationCapped, kExtinct, kVertexCapExceeded };
const char* to_string(Termination t) noexcept;
Termination termination_from_string(const std::string& s);

struct FrogConfig {
  double lambda = 0.0;
  std::uint32_t horizon = 1000;
  std::uint32_t depth_cap = 60;
  std::uint64_t max_active = 1'000'000;
  /// FM^(lambda+): Poisson(lambda) extra active frogs at the root.
  bool sleep_at_root = false;
  /// Deepest level whose first-activation times are written to JSON.
  std::uint32_t activation_record_depth = 4;

  void validate() const;
};

/// Summary of one replica. Shared by the frog, truncated and branching engines.
struct RunStats {
  /// Cumulative root hits after each tick; entry 0 is time 0.
  std::vector<std::uint64_t> root_returns_by_time{0};
  std::uint64_t total_root_returns = 0;
  std::vector<std::uint64_t> activated_per_level;
  /// Activated vertices with their first-landing time, in activation order.
  std::vector<std::pair<NodeId, std::uint32_t>> first_activation;
  Termination termination = Termination::kHorizonReached;
  std::uint32_t ticks = 0;
  std::uint64_t frogs_activated = 0;
  std::uint64_t retired_at_cap = 0;
  std::uint64_t peak_active = 0;
  std::uint64_t steps = 0;
  std::uint64_t truncated_walks = 0;
  std::size_t vertices_materialized = 0;
  /// Engine-specific additions (elimination ledger, coupling audit, ...).
  nlohmann::json extra = nlohmann::json::object();

  /// Cumulative returns at time t (clamped to the realized window).
  std::uint64_t returns_at(std::uint32_t t) const noexcept {
    return root_returns_by_time[std::min<std::size_t>(t, root_returns_by_time.size() - 1)];
  }
  void record_return(std::uint32_t tick, std::uint64_t count = 1);
  void note_activation(NodeId v, std::uint32_t depth, std::uint32_t tick);
};

/// JSON object for one replica. Activation times are written for vertices
/// up to `record_depth`, keyed by their path string.
nlohmann::json to_json(const RunStats& stats, const TreeHandle& tree, std::uint32_t record_depth);

struct Frog {
  NodeId pos;
  SplitMix64 gen;
};

/// Live state of a frog-model replica.
struct SimState {
  std::vector<Frog> active;
  std::vector<std::uint8_t> visited;  // indexed by NodeId
  std::uint64_t root_returns = 0;
  std::uint32_t clock = 0;
  RunStats stats;
  std::uint64_t sim_seed = 0;
  FrogConfig cfg;

  bool is_visited(NodeId v) const noexcept { return v.value < visited.size() && visited[v.value]; }
};

/// Sleeper count at a vertex: arrivals of a unit-rate Poisson process on
/// [0, lambda] drawn from a stream keyed by the vertex. Monotone in lambda.
std::uint32_t sleeper_count(std::uint64_t seed, std::uint64_t vertex_key, double lambda);
/// Stream of frog `index` originating at the vertex with `vertex_key`.
SplitMix64 frog_stream(std::uint64_t seed, std::uint64_t vertex_key, std::uint32_t index);

SimState init_fm(const TreeHandle& tree, const FrogConfig& cfg, std::uint64_t seed);
/// One synchronous round. Returns false once the replica has terminated.
bool step_fm(SimState& state, const TreeHandle& tree);
RunStats run_fm(const TreeHandle& tree, const FrogConfig& cfg, std::uint64_t seed);

struct WeightedActivation {
  double value = 0.0;
  double bracket_width = 0.0;
  bool low_precision = false;  // width above 0.01
};

/// Sum of HARM midpoints over the activated level-n vertices.
WeightedActivation harmonic_weighted_activation(const RunStats& stats, const TreeHandle& tree, std::uint32_t level,
                                                std::uint32_t depth_cap = 40);

}  // namespace frogsim
