#include "frogsim/frog_engine.hpp"

#include "frogsim/error.hpp"
#include "frogsim/harmonic.hpp"
#include "frogsim/walks.hpp"

namespace frogsim {

const char* to_string(Termination t) noexcept {
  switch (t) {
    case Termination::kHorizonReached: return "horizon_reached";
    case Termination::kPopulationCapped: return "population_capped";
    case Termination::kExtinct: return "extinct";
    case Termination::kVertexCapExceeded: return "vertex_cap_exceeded";
  }
  return "?";
}

Termination termination_from_string(const std::string& s) {
  for (auto t : {Termination::kHorizonReached, Termination::kPopulationCapped, Termination::kExtinct,
                 Termination::kVertexCapExceeded})
    if (s == to_string(t)) return t;
  throw PreconditionError("unknown termination status '" + s + "'");
}

void FrogConfig::validate() const {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be >= 0");
  if (horizon < 1) throw PreconditionError("horizon must be >= 1");
  if (depth_cap < 2) throw PreconditionError("depth_cap must be >= 2");
  if (max_active < 1) throw PreconditionError("max_active must be >= 1");
}

void RunStats::record_return(std::uint32_t tick, std::uint64_t count) {
  if (root_returns_by_time.size() <= tick) root_returns_by_time.resize(tick + 1, root_returns_by_time.back());
  root_returns_by_time[tick] += count;
  total_root_returns += count;
}

void RunStats::note_activation(NodeId v, std::uint32_t depth, std::uint32_t tick) {
  if (activated_per_level.size() <= depth) activated_per_level.resize(depth + 1, 0);
  ++activated_per_level[depth];
  first_activation.emplace_back(v, tick);
}

nlohmann::json to_json(const RunStats& s, const TreeHandle& tree, std::uint32_t record_depth) {
  nlohmann::json events = nlohmann::json::array();
  for (std::size_t t = 1; t < s.root_returns_by_time.size(); ++t)
    if (s.root_returns_by_time[t] != s.root_returns_by_time[t - 1]) events.push_back({t, s.root_returns_by_time[t]});
  nlohmann::json activation = nlohmann::json::object();
  for (const auto& [v, t] : s.first_activation)
    if (tree.depth(v) <= record_depth) activation[tree.vertex_id(v).to_string()] = t;
  nlohmann::json j = {{"termination", to_string(s.termination)},
                      {"ticks", s.ticks},
                      {"total_root_returns", s.total_root_returns},
                      {"return_events", events},
                      {"activated_per_level", s.activated_per_level},
                      {"first_activation", activation},
                      {"frogs_activated", s.frogs_activated},
                      {"retired_at_cap", s.retired_at_cap},
                      {"peak_active", s.peak_active},
                      {"steps", s.steps},
                      {"truncated_walks", s.truncated_walks},
                      {"vertices_materialized", s.vertices_materialized}};
  for (const auto& [k, v] : s.extra.items()) j[k] = v;
  return j;
}

std::uint32_t sleeper_count(std::uint64_t seed, std::uint64_t vertex_key, double lambda) {
  if (lambda <= 0.0) return 0;
  SplitMix64 gen = keyed_stream(seed, StreamTag::kSleepers, {vertex_key});
  return thinned_poisson(gen, lambda);
}

SplitMix64 frog_stream(std::uint64_t seed, std::uint64_t vertex_key, std::uint32_t index) {
  return keyed_stream(seed, StreamTag::kFrog, {vertex_key, index});
}

namespace {

void mark_visited(SimState& s, NodeId v) {
  if (s.visited.size() <= v.value) s.visited.resize(std::max<std::size_t>(v.value + 1, s.visited.size() * 2), 0);
  s.visited[v.value] = 1;
}

}  // namespace

SimState init_fm(const TreeHandle& tree, const FrogConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SimState s;
  s.cfg = cfg;
  s.sim_seed = seed;
  const NodeId root = tree.root();
  const std::uint64_t rk = tree.key(root);
  s.active.push_back({root, frog_stream(seed, rk, 0)});
  if (cfg.sleep_at_root) {
    const std::uint32_t extra = sleeper_count(seed, rk, cfg.lambda);
    for (std::uint32_t k = 1; k <= extra; ++k) s.active.push_back({root, frog_stream(seed, rk, k)});
  }
  mark_visited(s, root);
  s.stats.note_activation(root, 0, 0);
  s.stats.frogs_activated = s.active.size();
  s.stats.peak_active = s.active.size();
  return s;
}

bool step_fm(SimState& s, const TreeHandle& tree) {
  if (s.active.empty()) {
    s.stats.termination = Termination::kExtinct;
    return false;
  }
  if (s.clock >= s.cfg.horizon) {
    s.stats.termination = Termination::kHorizonReached;
    return false;
  }
  const std::uint32_t tick = ++s.clock;
  const std::size_t movers = s.active.size();
  std::uint64_t returns = 0;
  std::size_t keep = 0;
  for (std::size_t i = 0; i < movers; ++i) {
    Frog f = s.active[i];
    f.pos = srw_step(tree, f.pos, f.gen);
    ++s.stats.steps;
    const std::uint32_t depth = tree.depth(f.pos);
    if (depth >= s.cfg.depth_cap) {
      ++s.stats.retired_at_cap;
      continue;
    }
    if (tree.is_root(f.pos)) ++returns;
    if (!s.is_visited(f.pos)) {
      mark_visited(s, f.pos);
      s.stats.note_activation(f.pos, depth, tick);
      const std::uint64_t key = tree.key(f.pos);
      const std::uint32_t n = sleeper_count(s.sim_seed, key, s.cfg.lambda);
      // Woken frogs join after the movers, so they first move next tick.
      for (std::uint32_t k = 0; k < n; ++k) s.active.push_back({f.pos, frog_stream(s.sim_seed, key, k)});
      s.stats.frogs_activated += n;
    }
    s.active[keep++] = f;
  }
  // Compact: survivors of this tick, then the newly woken frogs.
  const std::size_t woken = s.active.size() - movers;
  std::move(s.active.begin() + static_cast<std::ptrdiff_t>(movers), s.active.end(),
            s.active.begin() + static_cast<std::ptrdiff_t>(keep));
  s.active.resize(keep + woken);

  s.root_returns += returns;
  s.stats.root_returns_by_time.push_back(s.stats.root_returns_by_time.back());
  if (returns) s.stats.record_return(tick, returns);
  s.stats.ticks = tick;
  s.stats.peak_active = std::max<std::uint64_t>(s.stats.peak_active, s.active.size());
  if (s.active.size() > s.cfg.max_active) {
    s.stats.termination = Termination::kPopulationCapped;
    return false;
  }
  return true;
}

RunStats run_fm(const TreeHandle& tree, const FrogConfig& cfg, std::uint64_t seed) {
  SimState s;
  try {
    s = init_fm(tree, cfg, seed);
    while (step_fm(s, tree)) {
    }
  } catch (const VertexCapExceeded& e) {
    s.stats.termination = Termination::kVertexCapExceeded;
    s.stats.extra["abort"] = e.what();
  }
  s.stats.vertices_materialized = tree.materialized();
  return std::move(s.stats);
}

WeightedActivation harmonic_weighted_activation(const RunStats& stats, const TreeHandle& tree, std::uint32_t level,
                                                std::uint32_t depth_cap) {
  SolverOptions opt;
  opt.anchor_depth = level;
  HarmonicSolver solver(tree, std::max(depth_cap, kMinDepthCap), opt);
  WeightedActivation out;
  for (const auto& [v, t] : stats.first_activation) {
    if (tree.depth(v) != level) continue;
    const ProbBracket h = solver.harm_vertex(v);
    out.value += h.mid();
    out.bracket_width += h.width();
  }
  out.low_precision = out.bracket_width > 0.01;
  return out;
}

}  // namespace frogsim
