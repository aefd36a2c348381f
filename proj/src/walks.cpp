#include "frogsim/walks.hpp"

#include "frogsim/error.hpp"

namespace frogsim {

const char* to_string(LerwTag tag) noexcept {
  switch (tag) {
    case LerwTag::kHitRoot: return "hit_root";
    case LerwTag::kEscaped: return "escaped";
    case LerwTag::kTruncated: return "truncated";
  }
  return "?";
}

NodeId srw_step(const TreeHandle& tree, NodeId v, SplitMix64& gen) {
  const std::uint32_t k = tree.child_count(v);
  const std::uint32_t degree = tree.is_root(v) ? k : k + 1;
  const std::uint32_t i = bounded(gen, degree);
  return i < k ? tree.child(v, i) : tree.parent(v);
}

NodeId srw_step_plus(const TreeHandle& tree, NodeId v, SplitMix64& gen) {
  if (v == kLeafVertex) {
    (void)gen();  // keep one draw per step
    return tree.root();
  }
  const std::uint32_t k = tree.child_count(v);
  const std::uint32_t i = bounded(gen, k + 1);
  if (i < k) return tree.child(v, i);
  return tree.is_root(v) ? kLeafVertex : tree.parent(v);
}

LerwOutcome lerw_to_root_or_escape(const TreeHandle& tree, NodeId start, SplitMix64& gen, WalkLimits limits,
                                   std::vector<NodeId>* raw) {
  if (tree.is_root(start)) throw PreconditionError("lerw_to_root_or_escape: start must not be the root");
  if (tree.depth(start) >= limits.depth_cap) throw PreconditionError("lerw_to_root_or_escape: start at or past depth_cap");
  TreeLoopEraser erased(start);
  if (raw) raw->push_back(start);
  LerwOutcome out;
  NodeId v = start;
  while (out.steps_consumed < limits.step_budget) {
    v = srw_step(tree, v, gen);
    ++out.steps_consumed;
    erased.step(v);
    if (raw) raw->push_back(v);
    if (tree.is_root(v)) {
      out.tag = LerwTag::kHitRoot;
      break;
    }
    if (tree.depth(v) >= limits.depth_cap) {
      out.tag = LerwTag::kEscaped;
      break;
    }
  }
  out.path = std::move(erased).take();
  return out;
}

LerwOutcome root_frog_lerw(const TreeHandle& tree, SplitMix64& gen, WalkLimits limits, std::vector<NodeId>* raw) {
  const NodeId first = srw_step(tree, tree.root(), gen);
  if (raw) raw->push_back(tree.root());
  LerwOutcome out;
  if (tree.depth(first) >= limits.depth_cap) {
    if (raw) raw->push_back(first);
    out.tag = LerwTag::kEscaped;
    out.path = {tree.root(), first};
    out.steps_consumed = 1;
    return out;
  }
  limits.step_budget = limits.step_budget > 0 ? limits.step_budget - 1 : 0;
  out = lerw_to_root_or_escape(tree, first, gen, limits, raw);
  out.path.insert(out.path.begin(), tree.root());
  ++out.steps_consumed;
  return out;
}

LerwOutcome walk_with_leaf_kill(const TreeHandle& tree, NodeId start, double p, SplitMix64& gen, WalkLimits limits) {
  if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("walk_with_leaf_kill: p must lie in [0, 1]");
  if (start != kLeafVertex && tree.depth(start) >= limits.depth_cap)
    throw PreconditionError("walk_with_leaf_kill: start at or past depth_cap");
  TreeLoopEraser erased(start);
  LerwOutcome out;
  NodeId v = start;
  while (out.steps_consumed < limits.step_budget) {
    v = srw_step_plus(tree, v, gen);
    ++out.steps_consumed;
    if (v == kLeafVertex) {
      if (uniform01(gen) < p) {
        out.tag = LerwTag::kHitRoot;
        out.killed_at_leaf = true;
        break;
      }
      // The excursion to the leaf and back is a loop; skip it.
      v = tree.root();
      ++out.steps_consumed;
      continue;
    }
    erased.step(v);
    if (!tree.is_root(v) && tree.depth(v) >= limits.depth_cap) {
      out.tag = LerwTag::kEscaped;
      break;
    }
  }
  out.path = std::move(erased).take();
  return out;
}

}  // namespace frogsim
