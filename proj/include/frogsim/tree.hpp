#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "frogsim/offspring.hpp"

namespace frogsim {

/// A vertex addressed by its sequence of child indices from the root.
/// Ordered breadth-first: shorter paths first, then lexicographically.
struct VertexId {
  std::vector<std::uint32_t> path;

  std::size_t depth() const noexcept { return path.size(); }
  bool is_root() const noexcept { return path.empty(); }
  VertexId child(std::uint32_t i) const;
  /// "0.2.1"; the root is the empty string.
  std::string to_string() const;
  static VertexId parse(const std::string& text);

  friend bool operator==(const VertexId&, const VertexId&) = default;
  friend std::strong_ordering operator<=>(const VertexId& a, const VertexId& b);
};

/// Dense handle of a materialized vertex inside one TreeHandle.
struct NodeId {
  std::uint32_t value = 0;
  friend bool operator==(NodeId, NodeId) = default;
  friend auto operator<=>(NodeId, NodeId) = default;
};

enum class AgwMode {
  /// Root has Z + 1 children; the extra child roots an independent GW tree.
  kExtraSubtree,
  /// Root has Z1 + Z2 children, i.e. the roots of two GW trees merged.
  kDoubleRoot,
};

struct TreeKind {
  struct GW {
    OffspringDistribution dist;
  };
  struct AGW {
    OffspringDistribution dist;
    AgwMode mode = AgwMode::kExtraSubtree;
  };
  struct Dary {
    std::uint32_t d;
  };
  /// Every vertex on level n has n + 2 children.
  struct HatTree {};
  /// Root with two children: the left one roots a 2-ary tree, the right one a
  /// d-ary tree.
  struct JoinedTree {
    std::uint32_t d;
  };
  /// Explicit child counts in breadth-first order, root first.
  struct Finite {
    std::vector<std::uint32_t> child_counts;
  };
  using Variant = std::variant<GW, AGW, Dary, HatTree, JoinedTree, Finite>;

  Variant variant;

  static TreeKind gw(OffspringDistribution d) { return {GW{std::move(d)}}; }
  static TreeKind agw(OffspringDistribution d, AgwMode m = AgwMode::kExtraSubtree) { return {AGW{std::move(d), m}}; }
  static TreeKind dary(std::uint32_t d) { return {Dary{d}}; }
  static TreeKind hat() { return {HatTree{}}; }
  static TreeKind joined(std::uint32_t d) { return {JoinedTree{d}}; }
  static TreeKind finite(std::vector<std::uint32_t> counts) { return {Finite{std::move(counts)}}; }

  /// Parses "dary:2", "hat", "joined:50", "gw:<law>", "agw:<law>",
  /// "agw2:<law>" (double-root mode). Laws as in OffspringDistribution::parse.
  static TreeKind parse(const std::string& text);
  std::string describe() const;
  /// True when every vertex is guaranteed at least two children.
  bool min_degree_two() const noexcept;
};

struct TreeOptions {
  std::size_t vertex_cap = 10'000'000;
};

/// Isomorphism class of a subtree for kinds where child counts depend only on
/// (branch, depth). Subtrees with equal keys are isomorphic.
struct ClassKey {
  std::uint32_t branch = 0;
  std::uint32_t depth = 0;
  friend bool operator==(ClassKey, ClassKey) = default;
  friend auto operator<=>(ClassKey, ClassKey) = default;
};

/// Lazily materialized rooted tree. Child counts are a pure function of
/// (kind, seed, vertex path), so any exploration order sees the same tree.
/// Materialization is internally synchronized: concurrent readers of one
/// handle are safe. Handles are movable but not copyable.
class TreeHandle {
 public:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  TreeHandle(TreeKind kind, std::uint64_t seed, TreeOptions options = {});
  ~TreeHandle();
  TreeHandle(TreeHandle&&) noexcept;
  TreeHandle& operator=(TreeHandle&&) noexcept;
  TreeHandle(const TreeHandle&) = delete;
  TreeHandle& operator=(const TreeHandle&) = delete;

  const TreeKind& kind() const noexcept;
  std::uint64_t seed() const noexcept;
  const TreeOptions& options() const noexcept;

  NodeId root() const noexcept { return NodeId{0}; }
  bool is_root(NodeId v) const noexcept { return v.value == 0; }
  std::uint32_t child_count(NodeId v) const;
  /// i-th child; materializes the sibling block on first access.
  NodeId child(NodeId v, std::uint32_t i) const;
  /// Parent of a non-root vertex.
  NodeId parent(NodeId v) const;
  std::uint32_t index_in_parent(NodeId v) const;
  /// Depth relative to this handle's root.
  std::uint32_t depth(NodeId v) const;
  std::uint64_t key(NodeId v) const;
  std::size_t materialized() const noexcept;

  /// Number of children of the vertex at `v`; throws InvalidVertex.
  std::uint32_t children(const VertexId& v) const;
  NodeId find(const VertexId& v) const;
  VertexId vertex_id(NodeId v) const;

  /// Handle for the subtree rooted at `v` (same kind and seed, fresh cache).
  TreeHandle subtree(NodeId v) const;
  /// Same tree, fresh cache.
  TreeHandle fresh_copy() const;

  bool min_degree_two() const noexcept;
  std::optional<ClassKey> homogeneous_class(NodeId v) const;
  std::uint32_t class_child_count(ClassKey c) const;
  ClassKey class_child(ClassKey c) const { return {c.branch, c.depth + 1}; }

 private:
  struct Impl;
  TreeHandle(std::shared_ptr<const TreeKind> kind, std::uint64_t seed, TreeOptions options,
             std::vector<std::uint32_t> prefix);
  std::unique_ptr<Impl> impl_;
};

/// Builds a handle; rejects malformed kinds with PreconditionError.
TreeHandle make_tree(TreeKind kind, std::uint64_t seed, TreeOptions options = {});

/// Explicit breadth-first truncation of a tree.
struct FiniteTree {
  struct Vertex {
    std::uint32_t parent;  // TreeHandle::kNone for the root
    std::uint32_t depth;
    std::uint32_t first_child;
    std::uint32_t child_count;
    bool boundary;  // sits on the truncation level
  };
  std::vector<Vertex> vertices;

  std::size_t size() const noexcept { return vertices.size(); }
  VertexId path(std::uint32_t index) const;
  /// One line per vertex, `path<TAB>child_count`, root first, BFS order.
  std::string serialize() const;
  static FiniteTree parse(const std::string& text);
  TreeKind to_kind() const;
};

/// Levels 0..depth of `tree`; vertices on level `depth` are boundary leaves.
FiniteTree truncate(const TreeHandle& tree, std::uint32_t depth, std::size_t max_vertices = 1'000'000);

}  // namespace frogsim
