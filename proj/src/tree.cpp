#include "frogsim/tree.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>

#include "frogsim/error.hpp"
#include "frogsim/rng.hpp"

namespace frogsim {

// ---------------------------------------------------------------------------
// VertexId

VertexId VertexId::child(std::uint32_t i) const {
  VertexId c = *this;
  c.path.push_back(i);
  return c;
}

std::string VertexId::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(path[i]);
  }
  return out;
}

VertexId VertexId::parse(const std::string& text) {
  VertexId v;
  if (text.empty()) return v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '.')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidVertex(text);
    v.path.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  }
  return v;
}

std::strong_ordering operator<=>(const VertexId& a, const VertexId& b) {
  if (auto c = a.path.size() <=> b.path.size(); c != 0) return c;
  return std::lexicographical_compare_three_way(a.path.begin(), a.path.end(), b.path.begin(), b.path.end());
}

// ---------------------------------------------------------------------------
// TreeKind

TreeKind TreeKind::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? std::string{} : text.substr(colon + 1);
  auto number = [&]() -> std::uint32_t {
    try {
      return static_cast<std::uint32_t>(std::stoul(rest));
    } catch (const std::logic_error&) {
      throw PreconditionError("tree kind '" + text + "': expected an integer parameter");
    }
  };
  if (head == "dary") return dary(number());
  if (head == "hat") return hat();
  if (head == "joined") return joined(number());
  if (head == "gw") return gw(OffspringDistribution::parse(rest));
  if (head == "agw") return agw(OffspringDistribution::parse(rest), AgwMode::kExtraSubtree);
  if (head == "agw2") return agw(OffspringDistribution::parse(rest), AgwMode::kDoubleRoot);
  throw PreconditionError("unknown tree kind '" + text + "'");
}

std::string TreeKind::describe() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, GW>) return "gw:" + k.dist.describe();
        else if constexpr (std::is_same_v<T, AGW>)
          return (k.mode == AgwMode::kExtraSubtree ? "agw:" : "agw2:") + k.dist.describe();
        else if constexpr (std::is_same_v<T, Dary>) return "dary:" + std::to_string(k.d);
        else if constexpr (std::is_same_v<T, HatTree>) return "hat";
        else if constexpr (std::is_same_v<T, JoinedTree>) return "joined:" + std::to_string(k.d);
        else return "finite:" + std::to_string(k.child_counts.size());
      },
      variant);
}

bool TreeKind::min_degree_two() const noexcept {
  return !std::holds_alternative<Finite>(variant);
}

// ---------------------------------------------------------------------------
// TreeHandle

namespace {

constexpr std::uint32_t kChunkBits = 12;
constexpr std::uint32_t kChunkSize = 1u << kChunkBits;
constexpr std::uint64_t kRootKey = 0x726f6f74ULL;

struct Node {
  std::uint32_t parent = TreeHandle::kNone;
  std::uint32_t depth = 0;
  std::uint32_t child_count = 0;
  std::atomic<std::uint32_t> first_child{TreeHandle::kNone};
  std::uint32_t index_in_parent = 0;
  std::uint32_t branch = TreeHandle::kNone;  // index of the depth-1 ancestor (absolute)
  std::uint32_t aux = 0;                     // BFS index for finite kinds
  std::uint64_t key = 0;
};

/// Kind plus precomputed lookup data shared by a tree and its subtree views.
struct KindData {
  TreeKind kind;
  std::vector<std::uint32_t> finite_first_child;  // BFS index of first child
};

std::shared_ptr<const KindData> make_kind_data(TreeKind kind) {
  auto data = std::make_shared<KindData>(KindData{std::move(kind), {}});
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, TreeKind::Dary>) {
          if (k.d < 2) throw PreconditionError("d-ary tree requires d >= 2");
        } else if constexpr (std::is_same_v<T, TreeKind::JoinedTree>) {
          if (k.d < 2) throw PreconditionError("joined tree requires d >= 2");
        } else if constexpr (std::is_same_v<T, TreeKind::Finite>) {
          if (k.child_counts.empty()) throw PreconditionError("finite tree needs at least a root");
          std::uint64_t next = 1;
          for (std::uint32_t c : k.child_counts) {
            data->finite_first_child.push_back(static_cast<std::uint32_t>(next));
            next += c;
          }
          if (next != k.child_counts.size())
            throw PreconditionError("finite tree table is inconsistent: " + std::to_string(k.child_counts.size()) +
                                    " entries but child counts imply " + std::to_string(next));
        }
      },
      data->kind.variant);
  return data;
}

}  // namespace

struct TreeHandle::Impl {
  std::shared_ptr<const KindData> data;
  std::uint64_t seed;
  TreeOptions options;
  std::vector<std::uint32_t> prefix;  // absolute path of this handle's root
  std::vector<std::unique_ptr<Node[]>> chunks;
  std::atomic<std::size_t> size{0};
  mutable std::mutex grow_mutex;

  Node& node(std::uint32_t i) const { return chunks[i >> kChunkBits][i & (kChunkSize - 1)]; }

  std::uint32_t abs_depth(const Node& n) const { return n.depth + static_cast<std::uint32_t>(prefix.size()); }

  std::uint32_t compute_child_count(std::uint32_t abs_depth, std::uint32_t branch, std::uint64_t key,
                                    std::uint32_t aux) const {
    return std::visit(
        [&](const auto& k) -> std::uint32_t {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, TreeKind::GW>) {
            auto gen = keyed_stream(seed, StreamTag::kOffspring, {key});
            return k.dist.sample(gen);
          } else if constexpr (std::is_same_v<T, TreeKind::AGW>) {
            auto gen = keyed_stream(seed, StreamTag::kOffspring, {key});
            const std::uint32_t z = k.dist.sample(gen);
            if (abs_depth != 0) return z;
            return k.mode == AgwMode::kExtraSubtree ? z + 1 : z + k.dist.sample(gen);
          } else if constexpr (std::is_same_v<T, TreeKind::Dary>) {
            return k.d;
          } else if constexpr (std::is_same_v<T, TreeKind::HatTree>) {
            return abs_depth + 2;
          } else if constexpr (std::is_same_v<T, TreeKind::JoinedTree>) {
            if (abs_depth == 0) return 2;
            return branch == 0 ? 2 : k.d;
          } else {
            return k.child_counts[aux];
          }
        },
        data->kind.variant);
  }

  std::uint32_t allocate(std::uint32_t count) {
    const std::size_t start = size.load(std::memory_order_relaxed);
    const std::size_t end = start + count;
    if (end > options.vertex_cap) throw VertexCapExceeded(end, options.vertex_cap);
    for (std::size_t c = start >> kChunkBits; c <= ((end == 0 ? 0 : end - 1) >> kChunkBits); ++c)
      if (!chunks[c]) chunks[c] = std::make_unique<Node[]>(kChunkSize);
    return static_cast<std::uint32_t>(start);
  }

  void init_root() {
    std::uint64_t key = kRootKey;
    std::uint32_t branch = kNone;
    std::uint32_t aux = 0;
    const auto* finite = std::get_if<TreeKind::Finite>(&data->kind.variant);
    for (std::size_t d = 0; d < prefix.size(); ++d) {
      const std::uint32_t i = prefix[d];
      key = hash_words({key, i});
      if (d == 0) branch = i;
      if (finite) aux = data->finite_first_child[aux] + i;
    }
    allocate(1);
    Node& r = node(0);
    r.key = key;
    r.branch = branch;
    r.aux = aux;
    r.child_count = compute_child_count(static_cast<std::uint32_t>(prefix.size()), branch, key, aux);
    size.store(1, std::memory_order_release);
  }

  std::uint32_t expand(std::uint32_t v) {
    std::lock_guard lock(grow_mutex);
    Node& parent = node(v);
    std::uint32_t first = parent.first_child.load(std::memory_order_acquire);
    if (first != kNone) return first;
    const std::uint32_t count = parent.child_count;
    first = allocate(count);
    const std::uint32_t child_abs_depth = abs_depth(parent) + 1;
    for (std::uint32_t i = 0; i < count; ++i) {
      Node& c = node(first + i);
      c.parent = v;
      c.depth = parent.depth + 1;
      c.index_in_parent = i;
      c.key = hash_words({parent.key, i});
      c.branch = child_abs_depth == 1 ? i : parent.branch;
      if (const auto* f = std::get_if<TreeKind::Finite>(&data->kind.variant)) {
        (void)f;
        c.aux = data->finite_first_child[parent.aux] + i;
      }
      c.child_count = compute_child_count(child_abs_depth, c.branch, c.key, c.aux);
      if (c.child_count < 2 && data->kind.min_degree_two())
        throw Error("materialized a vertex with " + std::to_string(c.child_count) + " children");
    }
    size.store(first + count, std::memory_order_release);
    parent.first_child.store(first, std::memory_order_release);
    return first;
  }
};

TreeHandle::TreeHandle(TreeKind kind, std::uint64_t seed, TreeOptions options)
    : TreeHandle(std::shared_ptr<const TreeKind>{}, seed, options, {}) {
  impl_->data = make_kind_data(std::move(kind));
  impl_->init_root();
}

TreeHandle::TreeHandle(std::shared_ptr<const TreeKind>, std::uint64_t seed, TreeOptions options,
                       std::vector<std::uint32_t> prefix)
    : impl_(std::make_unique<Impl>()) {
  impl_->seed = seed;
  impl_->options = options;
  impl_->prefix = std::move(prefix);
  impl_->chunks.resize((options.vertex_cap >> kChunkBits) + 2);
}

TreeHandle::~TreeHandle() = default;
TreeHandle::TreeHandle(TreeHandle&&) noexcept = default;
TreeHandle& TreeHandle::operator=(TreeHandle&&) noexcept = default;

const TreeKind& TreeHandle::kind() const noexcept { return impl_->data->kind; }
std::uint64_t TreeHandle::seed() const noexcept { return impl_->seed; }
const TreeOptions& TreeHandle::options() const noexcept { return impl_->options; }

std::uint32_t TreeHandle::child_count(NodeId v) const { return impl_->node(v.value).child_count; }

NodeId TreeHandle::child(NodeId v, std::uint32_t i) const {
  const Node& n = impl_->node(v.value);
  std::uint32_t first = n.first_child.load(std::memory_order_acquire);
  if (first == kNone) first = impl_->expand(v.value);
  return NodeId{first + i};
}

NodeId TreeHandle::parent(NodeId v) const { return NodeId{impl_->node(v.value).parent}; }
std::uint32_t TreeHandle::index_in_parent(NodeId v) const { return impl_->node(v.value).index_in_parent; }
std::uint32_t TreeHandle::depth(NodeId v) const { return impl_->node(v.value).depth; }
std::uint64_t TreeHandle::key(NodeId v) const { return impl_->node(v.value).key; }
std::size_t TreeHandle::materialized() const noexcept { return impl_->size.load(std::memory_order_acquire); }

NodeId TreeHandle::find(const VertexId& v) const {
  NodeId cur = root();
  for (std::uint32_t i : v.path) {
    if (i >= child_count(cur)) throw InvalidVertex(v.to_string());
    cur = child(cur, i);
  }
  return cur;
}

std::uint32_t TreeHandle::children(const VertexId& v) const { return child_count(find(v)); }

VertexId TreeHandle::vertex_id(NodeId v) const {
  VertexId out;
  out.path.resize(depth(v));
  for (NodeId cur = v; !is_root(cur); cur = parent(cur)) out.path[depth(cur) - 1] = index_in_parent(cur);
  return out;
}

TreeHandle TreeHandle::subtree(NodeId v) const {
  std::vector<std::uint32_t> prefix = impl_->prefix;
  const VertexId rel = vertex_id(v);
  prefix.insert(prefix.end(), rel.path.begin(), rel.path.end());
  TreeHandle out(std::shared_ptr<const TreeKind>{}, impl_->seed, impl_->options, std::move(prefix));
  out.impl_->data = impl_->data;
  out.impl_->init_root();
  return out;
}

TreeHandle TreeHandle::fresh_copy() const { return subtree(root()); }

bool TreeHandle::min_degree_two() const noexcept { return impl_->data->kind.min_degree_two(); }

std::optional<ClassKey> TreeHandle::homogeneous_class(NodeId v) const {
  const Node& n = impl_->node(v.value);
  const std::uint32_t abs = impl_->abs_depth(n);
  const auto& var = impl_->data->kind.variant;
  if (std::holds_alternative<TreeKind::Dary>(var) || std::holds_alternative<TreeKind::HatTree>(var))
    return ClassKey{0, n.depth};
  if (std::holds_alternative<TreeKind::JoinedTree>(var) && abs > 0) return ClassKey{n.branch, n.depth};
  return std::nullopt;
}

std::uint32_t TreeHandle::class_child_count(ClassKey c) const {
  const std::uint32_t abs = c.depth + static_cast<std::uint32_t>(impl_->prefix.size());
  return impl_->compute_child_count(abs, c.branch, 0, 0);
}

TreeHandle make_tree(TreeKind kind, std::uint64_t seed, TreeOptions options) {
  return TreeHandle(std::move(kind), seed, options);
}

// ---------------------------------------------------------------------------
// FiniteTree

VertexId FiniteTree::path(std::uint32_t index) const {
  VertexId out;
  out.path.resize(vertices[index].depth);
  for (std::uint32_t cur = index; vertices[cur].parent != TreeHandle::kNone; cur = vertices[cur].parent) {
    const std::uint32_t p = vertices[cur].parent;
    out.path[vertices[cur].depth - 1] = cur - vertices[p].first_child;
  }
  return out;
}

std::string FiniteTree::serialize() const {
  std::string out;
  for (std::uint32_t i = 0; i < vertices.size(); ++i) {
    out += path(i).to_string();
    out += '\t';
    out += std::to_string(vertices[i].child_count);
    out += '\n';
  }
  return out;
}

FiniteTree FiniteTree::parse(const std::string& text) {
  std::vector<std::uint32_t> counts;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw PreconditionError("finite tree line lacks a tab: '" + line + "'");
    const VertexId expected = counts.empty() ? VertexId{} : VertexId::parse(line.substr(0, tab));
    (void)expected;
    counts.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(tab + 1))));
  }
  // Rebuild through a handle so that the table is validated and the paths
  // recomputed in canonical BFS order.
  TreeHandle h(TreeKind::finite(counts), 0);
  std::uint32_t max_depth = 0;
  FiniteTree probe = truncate(h, 0xFFFFFFFFu, counts.size() + 1);
  for (const auto& v : probe.vertices) max_depth = std::max(max_depth, v.depth);
  for (auto& v : probe.vertices) v.boundary = v.child_count == 0 && v.depth == max_depth;
  // Check the written paths against the canonical order.
  std::istringstream again(text);
  std::uint32_t i = 0;
  while (std::getline(again, line)) {
    if (line.empty()) continue;
    if (probe.path(i).to_string() != line.substr(0, line.find('\t')))
      throw PreconditionError("finite tree line " + std::to_string(i) + " is out of BFS order");
    ++i;
  }
  return probe;
}

TreeKind FiniteTree::to_kind() const {
  std::vector<std::uint32_t> counts;
  counts.reserve(vertices.size());
  for (const auto& v : vertices) counts.push_back(v.child_count);
  return TreeKind::finite(std::move(counts));
}

FiniteTree truncate(const TreeHandle& tree, std::uint32_t depth, std::size_t max_vertices) {
  FiniteTree out;
  std::vector<NodeId> order{tree.root()};
  out.vertices.push_back({TreeHandle::kNone, 0, 0, 0, depth == 0});
  for (std::size_t i = 0; i < order.size(); ++i) {
    const NodeId v = order[i];
    auto& fv = out.vertices[i];
    fv.first_child = static_cast<std::uint32_t>(order.size());
    if (fv.depth >= depth) {
      fv.child_count = 0;
      continue;
    }
    const std::uint32_t k = tree.child_count(v);
    fv.child_count = k;
    if (order.size() + k > max_vertices) throw VertexCapExceeded(order.size() + k, max_vertices);
    const std::uint32_t child_depth = fv.depth + 1;
    for (std::uint32_t c = 0; c < k; ++c) {
      order.push_back(tree.child(v, c));
      out.vertices.push_back({static_cast<std::uint32_t>(i), child_depth, 0, 0, child_depth == depth});
    }
  }
  return out;
}

}  // namespace frogsim
