#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "frogsim/rng.hpp"
#include "frogsim/tree.hpp"

namespace frogsim {

/// The extra leaf v_l hanging off the root of T+. Never a real arena index.
inline constexpr NodeId kLeafVertex{0xFFFFFFFEu};

inline constexpr std::uint32_t kDefaultDepthCap = 60;
inline constexpr std::uint64_t kDefaultStepBudget = 1'000'000;

/// Uniform integer in [0, n) from one 64-bit draw (multiply-shift; the bias
/// is below 2^-40 for every degree we can materialize).
inline std::uint32_t bounded(SplitMix64& gen, std::uint32_t n) {
  return static_cast<std::uint32_t>((static_cast<unsigned __int128>(gen()) * n) >> 64);
}

/// One simple-random-walk step on T: uniform over children, then parent.
NodeId srw_step(const TreeHandle& tree, NodeId v, SplitMix64& gen);

/// One step on T+: the root additionally neighbours kLeafVertex, and
/// kLeafVertex only neighbours the root.
NodeId srw_step_plus(const TreeHandle& tree, NodeId v, SplitMix64& gen);

/// Chronological loop erasure of an arbitrary vertex sequence.
template <class V, class Hash = std::hash<V>>
std::vector<V> loop_erase(const std::vector<V>& path) {
  std::vector<V> out;
  std::unordered_map<V, std::size_t, Hash> where;
  for (const V& v : path) {
    if (auto it = where.find(v); it != where.end()) {
      for (std::size_t i = it->second + 1; i < out.size(); ++i) where.erase(out[i]);
      out.resize(it->second + 1);
    } else {
      where.emplace(v, out.size());
      out.push_back(v);
    }
  }
  return out;
}

struct NodeIdHash {
  std::size_t operator()(NodeId v) const noexcept { return v.value; }
};

/// Loop erasure specialised to walks on a tree, where every loop closes by
/// stepping back onto the previous vertex of the erased path.
class TreeLoopEraser {
 public:
  explicit TreeLoopEraser(NodeId start) : path_{start} {}
  void step(NodeId next) {
    if (path_.size() >= 2 && path_[path_.size() - 2] == next)
      path_.pop_back();
    else
      path_.push_back(next);
  }
  const std::vector<NodeId>& path() const noexcept { return path_; }
  std::vector<NodeId> take() && { return std::move(path_); }

 private:
  std::vector<NodeId> path_;
};

enum class LerwTag { kHitRoot, kEscaped, kTruncated };
const char* to_string(LerwTag tag) noexcept;

struct LerwOutcome {
  LerwTag tag = LerwTag::kTruncated;
  std::vector<NodeId> path;  // loop-erased, self-avoiding
  std::uint64_t steps_consumed = 0;
  bool killed_at_leaf = false;
};

struct WalkLimits {
  std::uint32_t depth_cap = kDefaultDepthCap;
  std::uint64_t step_budget = kDefaultStepBudget;
};

/// SRW from `start` until it hits the root or reaches depth_cap, erasing
/// loops on the fly. If `raw` is non-null the unerased walk is appended to it.
LerwOutcome lerw_to_root_or_escape(const TreeHandle& tree, NodeId start, SplitMix64& gen, WalkLimits limits = {},
                                   std::vector<NodeId>* raw = nullptr);

/// Trajectory of a frog that starts at the root and stops at its first
/// return there: [root] followed by the loop erasure of the walk after its
/// first step. A walk that returns yields [root, child, root].
LerwOutcome root_frog_lerw(const TreeHandle& tree, SplitMix64& gen, WalkLimits limits = {},
                           std::vector<NodeId>* raw = nullptr);

/// SRW on T+ from `start` (which may be the root). Every arrival at the leaf
/// kills the walk with probability p; otherwise it steps back to the root.
/// Reaching the root does not stop the walk. A kill is reported as kHitRoot
/// with the erased path ending at the root and killed_at_leaf set.
LerwOutcome walk_with_leaf_kill(const TreeHandle& tree, NodeId start, double p, SplitMix64& gen,
                                WalkLimits limits = {});

}  // namespace frogsim
