#include "frogsim/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frogsim/error.hpp"

namespace frogsim {
namespace {

double down(double x) { return std::max(0.0, x - kOutwardSlack); }
double up(double x) { return std::min(1.0, x + kOutwardSlack); }

bool is_random_kind(const TreeKind& k) {
  return std::holds_alternative<TreeKind::GW>(k.variant) || std::holds_alternative<TreeKind::AGW>(k.variant);
}

/// HARM brackets of every child from the escape weights K = 1 - h.
std::vector<ProbBracket> split_by_weights(const std::vector<ProbBracket>& k) {
  double sum_lo = 0.0, sum_hi = 0.0;
  for (const auto& w : k) {
    sum_lo += w.lo;
    sum_hi += w.hi;
  }
  std::vector<ProbBracket> out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double others_lo = std::max(0.0, sum_lo - k[i].lo);
    const double others_hi = sum_hi - k[i].hi;
    const double den_lo = k[i].lo + others_hi;
    const double den_hi = k[i].hi + others_lo;
    out[i].lo = den_lo > 0.0 ? down(k[i].lo / den_lo - 2 * kOutwardSlack * k.size()) : 0.0;
    out[i].hi = den_hi > 0.0 ? up(k[i].hi / den_hi + 2 * kOutwardSlack * k.size()) : 1.0;
  }
  return out;
}

}  // namespace

ProbBracket operator*(const ProbBracket& a, const ProbBracket& b) { return {down(a.lo * b.lo), up(a.hi * b.hi)}; }

// ---------------------------------------------------------------------------
// HarmonicSolver

HarmonicSolver::HarmonicSolver(const TreeHandle& tree, std::uint32_t depth_cap, SolverOptions options)
    : tree_(tree),
      depth_cap_(depth_cap),
      options_(options),
      random_kind_(is_random_kind(tree.kind())),
      finite_kind_(std::holds_alternative<TreeKind::Finite>(tree.kind().variant)) {
  if (depth_cap < kMinDepthCap)
    throw PreconditionError("harmonic solver: depth_cap must be at least " + std::to_string(kMinDepthCap));
  if (depth_cap >= (1u << 20)) throw PreconditionError("harmonic solver: depth_cap too large");
  if (options_.relative_depth == 0) throw PreconditionError("harmonic solver: relative_depth must be positive");
}

void HarmonicSolver::charge() {
  if (++evaluations_ > options_.max_evaluations) throw VertexCapExceeded(evaluations_, options_.max_evaluations);
}

std::uint32_t HarmonicSolver::levels_below(NodeId u) const {
  const std::uint32_t depth = tree_.depth(u);
  if (depth >= depth_cap_) return 0;
  if (!random_kind_) return depth_cap_ - depth;
  if (options_.anchor_depth) {
    const std::uint32_t boundary = std::min(depth_cap_, *options_.anchor_depth + options_.relative_depth);
    return boundary > depth ? boundary - depth : 0;
  }
  return std::min(options_.relative_depth, depth_cap_ - depth);
}

ProbBracket HarmonicSolver::boundary(std::uint32_t d) const {
  if (finite_kind_) return {0.0, 1.0};
  return {down(1.0 / (d + 1.0)), up(2.0 / (d + 2.0))};
}

ProbBracket HarmonicSolver::combine(std::uint32_t d, double sum_lo, double sum_hi) const {
  return {down(1.0 / (1.0 + d - sum_lo)), up(1.0 / (1.0 + d - sum_hi))};
}

ProbBracket HarmonicSolver::h_class(ClassKey c, std::uint32_t r) {
  const std::uint64_t key = (static_cast<std::uint64_t>(c.branch) << 40) ^ (static_cast<std::uint64_t>(c.depth) << 20) ^ r;
  if (auto it = class_memo_.find(key); it != class_memo_.end()) return it->second;
  charge();
  const std::uint32_t d = tree_.class_child_count(c);
  ProbBracket out;
  if (r == 0) {
    out = boundary(d);
  } else {
    const ProbBracket hc = h_class(tree_.class_child(c), r - 1);
    out = combine(d, down(d * hc.lo), up(d * hc.hi) + d * kOutwardSlack);
  }
  class_memo_.emplace(key, out);
  return out;
}

ProbBracket HarmonicSolver::h_node(NodeId u, std::uint32_t r) {
  const std::uint32_t d = tree_.child_count(u);
  if (finite_kind_ && d == 0) return {0.0, 0.0};
  if (!random_kind_ && !finite_kind_) {
    if (auto c = tree_.homogeneous_class(u)) return h_class(*c, r);
  }
  if (r == 0) return boundary(d);
  const std::uint64_t key = (static_cast<std::uint64_t>(u.value) << 20) | r;
  if (auto it = node_memo_.find(key); it != node_memo_.end()) return it->second;
  charge();
  double sum_lo = 0.0, sum_hi = 0.0;
  for (std::uint32_t i = 0; i < d; ++i) {
    const ProbBracket hc = h_node(tree_.child(u, i), r - 1);
    sum_lo += hc.lo;
    sum_hi += hc.hi;
  }
  const ProbBracket out = combine(d, std::max(0.0, sum_lo - d * kOutwardSlack), sum_hi + d * kOutwardSlack);
  node_memo_.emplace(key, out);
  return out;
}

ProbBracket HarmonicSolver::hit_parent(NodeId u) {
  if (tree_.is_root(u)) throw PreconditionError("hit_parent_prob: vertex must not be the root");
  return h_node(u, levels_below(u));
}

ProbBracket HarmonicSolver::hit_root(NodeId u) {
  if (tree_.is_root(u)) throw PreconditionError("hit_root_prob: vertex must not be the root");
  ProbBracket acc{1.0, 1.0};
  for (NodeId x = u; !tree_.is_root(x); x = tree_.parent(x)) acc = acc * hit_parent(x);
  return acc;
}

std::vector<ProbBracket> HarmonicSolver::child_weights(NodeId v) {
  const std::uint32_t d = tree_.child_count(v);
  std::vector<ProbBracket> k(d);
  for (std::uint32_t i = 0; i < d; ++i) {
    const NodeId c = tree_.child(v, i);
    const ProbBracket h = h_node(c, levels_below(c));
    k[i] = {down(1.0 - h.hi), up(1.0 - h.lo)};
  }
  return k;
}

ProbBracket HarmonicSolver::harm_child(NodeId v, std::uint32_t i) {
  const std::uint32_t d = tree_.child_count(v);
  if (i >= d) throw InvalidVertex(tree_.vertex_id(v).child(i).to_string());
  if (d == 1) return {1.0, 1.0};
  return split_by_weights(child_weights(v))[i];
}

ProbBracket HarmonicSolver::harm_vertex(NodeId v) {
  ProbBracket acc{1.0, 1.0};
  for (NodeId x = v; !tree_.is_root(x); x = tree_.parent(x)) acc = acc * harm_child(tree_.parent(x), tree_.index_in_parent(x));
  return acc;
}

ProbBracket hit_parent_prob(const TreeHandle& tree, NodeId v, std::uint32_t depth_cap, SolverOptions options) {
  return HarmonicSolver(tree, depth_cap, options).hit_parent(v);
}

ProbBracket hit_root_prob(const TreeHandle& tree, NodeId u, std::uint32_t depth_cap, SolverOptions options) {
  return HarmonicSolver(tree, depth_cap, options).hit_root(u);
}

ProbBracket harm_child(const TreeHandle& tree, NodeId v, std::uint32_t i, std::uint32_t depth_cap,
                       SolverOptions options) {
  return HarmonicSolver(tree, depth_cap, options).harm_child(v, i);
}

ProbBracket harm_vertex(const TreeHandle& tree, NodeId v, std::uint32_t depth_cap, SolverOptions options) {
  if (!options.anchor_depth) options.anchor_depth = tree.depth(v);
  return HarmonicSolver(tree, depth_cap, options).harm_vertex(v);
}

ProbBracket leaf_kill_prob(const TreeHandle& tree, NodeId start, double p, std::uint32_t depth_cap,
                           SolverOptions options) {
  if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("leaf_kill_prob: p must lie in (0, 1]");
  HarmonicSolver solver(tree, depth_cap, options);
  const NodeId root = tree.root();
  const std::uint32_t k = tree.child_count(root);
  double sum_lo = 0.0, sum_hi = 0.0;
  for (std::uint32_t i = 0; i < k; ++i) {
    const ProbBracket h = solver.hit_parent(tree.child(root, i));
    sum_lo += h.lo;
    sum_hi += h.hi;
  }
  ProbBracket at_root{down(p / (k + p - std::max(0.0, sum_lo - k * kOutwardSlack))),
                      up(p / (k + p - sum_hi - k * kOutwardSlack))};
  if (tree.is_root(start)) return at_root;
  return solver.hit_root(start) * at_root;
}

// ---------------------------------------------------------------------------
// First-hit distribution

FirstHit first_hit_level_n(const TreeHandle& tree, std::uint32_t n, std::size_t max_vertices) {
  FirstHit out;
  if (n == 0) {
    out.vertices = {tree.root()};
    out.f = {1.0};
    return out;
  }
  // Breadth-first list of levels 0..n with parent positions.
  std::vector<NodeId> order{tree.root()};
  std::vector<std::uint32_t> parent_pos{0};
  std::vector<std::uint32_t> first_child_pos;
  std::vector<std::uint32_t> level_start{0};
  for (std::uint32_t depth = 0; depth < n; ++depth) {
    const std::size_t begin = level_start.back();
    const std::size_t end = order.size();
    level_start.push_back(static_cast<std::uint32_t>(end));
    for (std::size_t i = begin; i < end; ++i) {
      first_child_pos.push_back(static_cast<std::uint32_t>(order.size()));
      const std::uint32_t k = tree.child_count(order[i]);
      if (order.size() + k > max_vertices) throw VertexCapExceeded(order.size() + k, max_vertices);
      for (std::uint32_t c = 0; c < k; ++c) {
        order.push_back(tree.child(order[i], c));
        parent_pos.push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  const std::size_t level_n = level_start.back();
  if (level_n == order.size()) throw PreconditionError("first_hit_level_n: tree has no vertex on level " + std::to_string(n));

  // a(u) = P_u(hit parent before level n); zero on level n.
  std::vector<double> a(order.size(), 0.0);
  for (std::size_t i = level_n; i-- > 1;) {
    const std::uint32_t k = tree.child_count(order[i]);
    double s = 0.0;
    for (std::uint32_t c = 0; c < k; ++c) s += a[first_child_pos[i] + c];
    a[i] = 1.0 / (1.0 + k - s);
  }
  // Top-down shares.
  std::vector<double> mass(order.size(), 0.0);
  mass[0] = 1.0;
  {
    const std::uint32_t k = tree.child_count(order[0]);
    double total = 0.0;
    for (std::uint32_t c = 0; c < k; ++c) total += 1.0 - a[first_child_pos[0] + c];
    for (std::uint32_t c = 0; c < k; ++c) mass[first_child_pos[0] + c] = (1.0 - a[first_child_pos[0] + c]) / total;
  }
  for (std::size_t i = 1; i < level_n; ++i) {
    if (mass[i] == 0.0 || a[i] >= 1.0) continue;
    const std::uint32_t k = tree.child_count(order[i]);
    const double scale = mass[i] * a[i] / (1.0 - a[i]);
    for (std::uint32_t c = 0; c < k; ++c) mass[first_child_pos[i] + c] = scale * (1.0 - a[first_child_pos[i] + c]);
  }
  out.vertices.assign(order.begin() + level_n, order.end());
  out.f.assign(mass.begin() + level_n, mass.end());
  return out;
}

// ---------------------------------------------------------------------------
// Harmonic rays

HarmonicRay sample_harmonic_ray(HarmonicSolver& solver, std::uint32_t n, SplitMix64& gen) {
  const TreeHandle& tree = solver.tree();
  HarmonicRay ray;
  NodeId v = tree.root();
  ray.vertices.push_back(v);
  for (std::uint32_t j = 0; j < n; ++j) {
    const std::uint32_t d = tree.child_count(v);
    if (d == 0) throw PreconditionError("sample_harmonic_ray: reached a leaf");
    const auto harm = split_by_weights(solver.child_weights(v));
    double total = 0.0;
    for (const auto& h : harm) total += h.mid();
    const double u = uniform01(gen) * total;
    std::uint32_t pick = d - 1;
    double acc = 0.0;
    for (std::uint32_t i = 0; i < d; ++i) {
      acc += harm[i].mid();
      if (u < acc) {
        pick = i;
        break;
      }
    }
    ray.width_accumulated += harm[pick].width();
    v = tree.child(v, pick);
    ray.vertices.push_back(v);
  }
  ray.flagged = ray.width_accumulated > 0.01;
  return ray;
}

HarmonicRay sample_harmonic_ray(const TreeHandle& tree, std::uint32_t n, std::uint32_t depth_cap, SplitMix64& gen,
                                SolverOptions options) {
  if (!options.anchor_depth) options.anchor_depth = n;
  HarmonicSolver solver(tree, depth_cap, options);
  return sample_harmonic_ray(solver, n, gen);
}

// ---------------------------------------------------------------------------
// Audits

nlohmann::json AuditReport::to_json() const {
  return {{"lemma", lemma}, {"instances", instances}, {"worst_slack", worst_slack}, {"pass", pass}, {"details", details}};
}

void AuditReport::merge(const AuditReport& other) {
  if (instances == 0 || other.worst_slack < worst_slack) {
    worst_slack = other.worst_slack;
    details = other.details;
  }
  instances += other.instances;
  pass = pass && other.pass;
  if (lemma.empty()) lemma = other.lemma;
}

namespace {

void require_min_degree_two(const TreeHandle& tree, const char* what) {
  if (!tree.min_degree_two()) throw PreconditionError(std::string(what) + ": requires a tree with at least two children per vertex");
}

}  // namespace

AuditReport audit_lemma_B1(const TreeHandle& tree, std::uint32_t n, std::uint32_t depth_cap, SolverOptions options) {
  require_min_degree_two(tree, "audit_lemma_B1");
  if (!options.anchor_depth) options.anchor_depth = n;
  HarmonicSolver solver(tree, depth_cap, options);
  const FirstHit fh = first_hit_level_n(tree, n);
  AuditReport rep;
  rep.lemma = "B.1";
  rep.worst_slack = std::numeric_limits<double>::infinity();
  double upper_ratio = 0.0, lower_ratio = 0.0, conservative_upper = 0.0, conservative_lower = 0.0, widest = 0.0;
  const double c = kLemmaB1Constant;
  for (std::size_t i = 0; i < fh.vertices.size(); ++i) {
    const ProbBracket h = solver.harm_vertex(fh.vertices[i]);
    const double f = fh.f[i];
    ++rep.instances;
    widest = std::max(widest, h.width());
    upper_ratio = std::max(upper_ratio, f / h.hi);
    lower_ratio = std::max(lower_ratio, h.lo / f);
    conservative_upper = std::max(conservative_upper, h.lo > 0 ? f / h.lo : std::numeric_limits<double>::infinity());
    conservative_lower = std::max(conservative_lower, h.hi / f);
    const double slack = std::min(std::log(c * h.hi / f), std::log(c * f / h.lo));
    rep.worst_slack = std::min(rep.worst_slack, slack);
    if (!(f <= c * h.hi && h.lo / c <= f)) rep.pass = false;
  }
  rep.details = {{"level", n},
                 {"constant", c},
                 {"max_f_over_harm_hi", upper_ratio},
                 {"max_harm_lo_over_f", lower_ratio},
                 {"max_f_over_harm_lo", conservative_upper},
                 {"max_harm_hi_over_f", conservative_lower},
                 {"widest_bracket", widest}};
  return rep;
}

AuditReport audit_lemma_A1(const TreeHandle& tree, NodeId u, std::uint32_t depth_cap, SolverOptions options) {
  require_min_degree_two(tree, "audit_lemma_A1");
  if (tree.child_count(tree.root()) < 3)
    throw PreconditionError("audit_lemma_A1: the root needs at least three children (minimum degree 3)");
  const std::uint32_t du = tree.depth(u);
  if (du < 2) throw PreconditionError("audit_lemma_A1: u must sit at depth >= 2");
  NodeId v = u;
  while (tree.depth(v) > 2) v = tree.parent(v);
  const NodeId back_v = tree.parent(v);

  HarmonicSolver solver(tree, depth_cap, options);
  const ProbBracket p0 = solver.hit_root(u);

  // HARM inside T(v): re-address u in a subtree handle rooted at v.
  TreeHandle sub = tree.subtree(v);
  VertexId rel;
  const VertexId full = tree.vertex_id(u);
  rel.path.assign(full.path.begin() + 2, full.path.end());
  const NodeId u_sub = sub.find(rel);
  SolverOptions sub_options = options;
  if (sub_options.anchor_depth) sub_options.anchor_depth = *sub_options.anchor_depth > 2 ? *sub_options.anchor_depth - 2 : 0;
  HarmonicSolver sub_solver(sub, std::max(kMinDepthCap, depth_cap - 2), sub_options);
  const ProbBracket harm = sub_solver.harm_vertex(u_sub);

  const double t1_u = tree.child_count(u);
  const double t1_back = tree.child_count(back_v);
  const double rhs = kLemmaA1Constant * harm.lo / (t1_u * t1_back);

  AuditReport rep;
  rep.lemma = "A.1";
  rep.instances = 1;
  rep.pass = p0.lo >= rhs;
  rep.worst_slack = std::log(p0.lo / rhs);
  rep.details = {{"u", full.to_string()},       {"p0_lo", p0.lo},   {"p0_hi", p0.hi}, {"harm_lo", harm.lo},
                 {"harm_hi", harm.hi},          {"t1_u", t1_u},     {"t1_back_v", t1_back},
                 {"rhs", rhs},                  {"constant", kLemmaA1Constant}};
  return rep;
}

AuditReport audit_level1_harm(const TreeHandle& tree, std::uint32_t depth_cap, SolverOptions options) {
  require_min_degree_two(tree, "audit_level1_harm");
  if (!options.anchor_depth) options.anchor_depth = 1;
  HarmonicSolver solver(tree, depth_cap, options);
  const std::uint32_t k = tree.child_count(tree.root());
  AuditReport rep;
  rep.lemma = "level1";
  rep.worst_slack = std::numeric_limits<double>::infinity();
  double min_lo = 1.0, max_hi = 0.0;
  for (std::uint32_t i = 0; i < k; ++i) {
    const ProbBracket h = solver.harm_child(tree.root(), i);
    ++rep.instances;
    const double lower = 1.0 / (2.0 * k), upper = 2.0 / k;
    rep.worst_slack = std::min({rep.worst_slack, std::log(h.lo / lower), std::log(upper / h.hi)});
    if (!(h.lo >= lower && h.hi <= upper)) rep.pass = false;
    min_lo = std::min(min_lo, h.lo * k);
    max_hi = std::max(max_hi, h.hi * k);
  }
  rep.details = {{"root_children", k}, {"min_harm_lo_times_t1", min_lo}, {"max_harm_hi_times_t1", max_hi}};
  return rep;
}

Lemma44Value lemma_4_4_observable(const TreeHandle& tree, std::uint32_t n, std::uint32_t big_n, std::uint32_t depth_cap,
                                  SolverOptions options) {
  if (!options.anchor_depth) options.anchor_depth = n;
  HarmonicSolver solver(tree, depth_cap, options);
  std::vector<NodeId> level{tree.root()};
  for (std::uint32_t d = 0; d < n; ++d) {
    std::vector<NodeId> next;
    for (NodeId v : level)
      for (std::uint32_t i = 0; i < tree.child_count(v); ++i) next.push_back(tree.child(v, i));
    level = std::move(next);
  }
  Lemma44Value out;
  for (NodeId v : level) {
    if (tree.child_count(v) < big_n) continue;
    const ProbBracket h = solver.harm_vertex(v);
    out.value += h.mid();
    out.width += h.width();
  }
  out.low_precision = out.width > 0.01;
  return out;
}

RnSample rn_ratio_sample(const OffspringDistribution& dist, std::uint32_t n, const std::vector<TreePredicate>& events,
                         std::uint64_t replica_seed, SolverOptions options, AgwMode mode) {
  if (!options.anchor_depth) options.anchor_depth = n;
  const std::uint32_t depth_cap = std::max(kMinDepthCap, n + options.relative_depth);
  RnSample out;
  {
    TreeHandle t(TreeKind::agw(dist, mode), replica_seed);
    SplitMix64 gen = keyed_stream(replica_seed, StreamTag::kRay);
    HarmonicSolver solver(t, depth_cap, options);
    const HarmonicRay ray = sample_harmonic_ray(solver, n, gen);
    out.flagged = ray.flagged;
    const TreeHandle sub = t.subtree(ray.vertices.back());
    for (const auto& e : events) out.agw.push_back(e(sub));
  }
  TreeHandle t(TreeKind::gw(dist), hash_words({replica_seed, 0x6777ULL}));
  for (const auto& e : events) out.gw.push_back(e(t));
  return out;
}

RatioEstimate ratio_from_counts(std::uint64_t agw_hits, std::uint64_t gw_hits, std::uint64_t replicas,
                                std::uint64_t flagged) {
  if (replicas == 0) throw PreconditionError("rn_ratio_estimate: replicas must be positive");
  RatioEstimate out;
  out.replicas = replicas;
  out.flagged_rays = flagged;
  const double nn = static_cast<double>(replicas);
  out.agw_prob = agw_hits / nn;
  out.gw_prob = gw_hits / nn;
  if (gw_hits < 10)
    throw PreconditionError("rn_ratio_estimate: GW(A) estimate " + std::to_string(out.gw_prob) +
                            " is below 10/replicas; the ratio would be unstable");
  out.ratio = out.agw_prob / out.gw_prob;
  const double va = out.agw_prob * (1 - out.agw_prob) / nn;
  const double vg = out.gw_prob * (1 - out.gw_prob) / nn;
  const double rel = (out.agw_prob > 0 ? va / (out.agw_prob * out.agw_prob) : 0.0) + vg / (out.gw_prob * out.gw_prob);
  out.stderr_ratio = out.ratio * std::sqrt(rel);
  out.ci = {std::max(0.0, out.ratio - 3 * out.stderr_ratio), out.ratio + 3 * out.stderr_ratio};
  return out;
}

RatioEstimate rn_ratio_estimate(const OffspringDistribution& dist, std::uint32_t n, const TreePredicate& event,
                                std::uint64_t replicas, std::uint64_t seed, SolverOptions options, AgwMode mode) {
  if (replicas == 0) throw PreconditionError("rn_ratio_estimate: replicas must be positive");
  std::uint64_t agw_hits = 0, gw_hits = 0, flagged = 0;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    const std::uint64_t s = hash_words({seed, static_cast<std::uint64_t>(StreamTag::kReplica), r});
    const RnSample x = rn_ratio_sample(dist, n, {event}, s, options, mode);
    agw_hits += x.agw[0];
    gw_hits += x.gw[0];
    flagged += x.flagged;
  }
  return ratio_from_counts(agw_hits, gw_hits, replicas, flagged);
}

}  // namespace frogsim
